use ps_core::{angular_error, NormalMap, Real};
use serde::{Deserialize, Serialize};

use crate::color_table::error_color_table;
use crate::error::{EvalError, EvalResult};

/// Per-pixel angular error in degrees over the mask intersection.
#[derive(Clone, Debug)]
pub struct ErrorMap {
    pub width: usize,
    pub height: usize,
    pub degrees: Vec<f64>,
    pub mask: Vec<bool>,
}

pub fn error_map<T: Real>(pred: &NormalMap<T>, gt: &NormalMap<T>) -> EvalResult<ErrorMap> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(EvalError::validation(format!(
            "prediction is {}x{}, ground truth {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let (w, h) = (pred.width(), pred.height());
    let mut degrees = vec![0.0; w * h];
    let mut mask = vec![false; w * h];
    let mut any = false;
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            if pred.masked_in(row, col) && gt.masked_in(row, col) {
                degrees[i] = angular_error(pred.get(row, col), gt.get(row, col))?.as_f64();
                mask[i] = true;
                any = true;
            }
        }
    }
    if !any {
        return Err(EvalError::validation("no pixels in the mask intersection"));
    }
    Ok(ErrorMap { width: w, height: h, degrees, mask })
}

/// Mean angular error in degrees over the mask intersection.
pub fn mae<T: Real>(pred: &NormalMap<T>, gt: &NormalMap<T>) -> EvalResult<f64> {
    Ok(error_map(pred, gt)?.mean())
}

impl ErrorMap {
    pub fn mean(&self) -> f64 {
        let mut acc = 0.0;
        let mut count = 0usize;
        for (d, &m) in self.degrees.iter().zip(&self.mask) {
            if m {
                acc += d;
                count += 1;
            }
        }
        acc / count as f64
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Nearest-rank percentile of the masked error values.
    pub fn percentile(&self, q: f64) -> f64 {
        let mut vals: Vec<f64> = self
            .degrees
            .iter()
            .zip(&self.mask)
            .filter_map(|(d, &m)| if m { Some(*d) } else { None })
            .collect();
        vals.sort_by(|a, b| a.total_cmp(b));
        let n = vals.len();
        let rank = ((q / 100.0 * n as f64).ceil() as usize).clamp(1, n);
        vals[rank - 1]
    }

    /// Renders onto the fixed 256-entry color table, linear up to
    /// `max_degrees` (saturating above), masked-out pixels black.
    pub fn to_png_rgb(&self, max_degrees: f64) -> Vec<u8> {
        let table = error_color_table();
        let mut out = Vec::with_capacity(self.width * self.height * 3);
        for (d, &m) in self.degrees.iter().zip(&self.mask) {
            if !m {
                out.extend_from_slice(&[0, 0, 0]);
            } else {
                let t = (d / max_degrees * 255.0).floor().clamp(0.0, 255.0) as usize;
                out.extend_from_slice(&table[t]);
            }
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Percentiles {
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
}

/// Evaluation summary; `mae_degrees` equals the mean of the error map over
/// masked-in pixels by construction.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EvalReport {
    pub scene: String,
    pub mae_degrees: f64,
    pub percentiles: Percentiles,
    pub masked_pixels: usize,
    pub runtime_seconds: f64,
}

pub fn eval_report<T: Real>(
    scene: impl Into<String>,
    pred: &NormalMap<T>,
    gt: &NormalMap<T>,
    runtime_seconds: f64,
) -> EvalResult<(EvalReport, ErrorMap)> {
    let map = error_map(pred, gt)?;
    let report = EvalReport {
        scene: scene.into(),
        mae_degrees: map.mean(),
        percentiles: Percentiles {
            p50: map.percentile(50.0),
            p75: map.percentile(75.0),
            p90: map.percentile(90.0),
        },
        masked_pixels: map.masked_count(),
        runtime_seconds,
    };
    Ok((report, map))
}
