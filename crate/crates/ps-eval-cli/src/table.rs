use crate::error::{EvalError, EvalResult};

/// Rows = variants, columns = scenes plus "Avg." (arithmetic row mean).
/// Every row must cover the same scenes in the same order.
pub fn ablation_table(rows: &[(String, Vec<(String, f64)>)]) -> EvalResult<String> {
    if rows.is_empty() {
        return Err(EvalError::validation("ablation table needs at least one variant row"));
    }
    let scene_names: Vec<&str> = rows[0].1.iter().map(|(name, _)| name.as_str()).collect();
    if scene_names.is_empty() {
        return Err(EvalError::validation("ablation table needs at least one scene"));
    }
    let mut out = String::from("Method");
    for name in &scene_names {
        out.push('\t');
        out.push_str(name);
    }
    out.push_str("\tAvg.\n");
    for (variant, cells) in rows {
        let row_names: Vec<&str> = cells.iter().map(|(name, _)| name.as_str()).collect();
        if row_names != scene_names {
            return Err(EvalError::validation(format!(
                "variant {variant} evaluated on {row_names:?}, expected {scene_names:?}"
            )));
        }
        out.push_str(variant);
        let mut sum = 0.0;
        for (_, v) in cells {
            out.push_str(&format!("\t{v:.2}"));
            sum += v;
        }
        out.push_str(&format!("\t{:.2}\n", sum / cells.len() as f64));
    }
    Ok(out)
}

/// Row average as computed by the table.
pub fn row_average(cells: &[(String, f64)]) -> f64 {
    cells.iter().map(|(_, v)| v).sum::<f64>() / cells.len() as f64
}
