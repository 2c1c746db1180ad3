//! Subcommand implementations, generic over the scalar precision.

use std::fs;
use std::path::Path;

use nn_engine::{ParamStore, Scalar};
use ps_classic::{l2_solve, L2Options};
use ps_core::{ImageStack, NormalMap, Rng};
use ps_render::render_dataset;
use ps_train::{fit, FitOptions, Scene, TrainConfig};
use rmaff_net::{network_forward, NetworkConfig, RmaffPsn, Variant};
use serde::Serialize;

use crate::config::ToolkitConfig;
use crate::dataset_dir::{load_dataset, save_dataset, scene_dirs};
use crate::error::{EvalError, EvalResult};
use crate::metrics::eval_report;
use crate::pfm::{read_pfm_normals, write_pfm_normals};
use crate::png_codec::{load_normal_png, save_normal_png};
use crate::table::ablation_table;

const STREAM_INIT: u64 = 0x49_4E;

pub struct GlobalOpts {
    pub seed: u64,
    pub deterministic: bool,
}

/// "0-75,80,90" -> sorted unique indices.
pub fn parse_subset(spec: &str) -> EvalResult<Vec<usize>> {
    let mut out = Vec::new();
    for part in spec.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        if let Some((a, b)) = part.split_once('-') {
            let lo: usize = a.trim().parse().map_err(|_| {
                EvalError::validation(format!("bad subset range start {a:?} in {spec:?}"))
            })?;
            let hi: usize = b.trim().parse().map_err(|_| {
                EvalError::validation(format!("bad subset range end {b:?} in {spec:?}"))
            })?;
            if hi < lo {
                return Err(EvalError::validation(format!("empty subset range {part:?}")));
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.parse().map_err(|_| {
                EvalError::validation(format!("bad subset index {part:?} in {spec:?}"))
            })?);
        }
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err(EvalError::validation(format!("subset {spec:?} selects nothing")));
    }
    Ok(out)
}

pub fn cmd_render<T: Scalar>(
    config_path: &Path,
    out_dir: &Path,
    opts: &GlobalOpts,
) -> EvalResult<()> {
    let cfg = ToolkitConfig::load(config_path)?;
    let render = cfg
        .render
        .as_ref()
        .ok_or_else(|| EvalError::validation("config has no render block"))?;
    let specs = render.scene_specs(opts.seed)?;
    let lights = render.light_set::<T>(opts.seed)?;
    let rendered = render_dataset(&specs, &lights)?;
    fs::create_dir_all(out_dir)?;
    for (i, (stack, gt)) in rendered.iter().enumerate() {
        save_dataset(&out_dir.join(format!("scene_{i:03}")), stack, Some(gt))?;
    }
    println!("rendered {} scenes ({} lights each) to {}", rendered.len(), lights.len(), out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct SolveMeta {
    method: String,
    rejected_pixels: usize,
    lights_used: usize,
    runtime_seconds: f64,
}

fn write_solution<T: Scalar>(
    out_dir: &Path,
    normals: &NormalMap<T>,
    meta: &SolveMeta,
) -> EvalResult<()> {
    fs::create_dir_all(out_dir)?;
    save_normal_png(&out_dir.join("normal_pred.png"), normals)?;
    write_pfm_normals(&out_dir.join("normal_pred.pfm"), normals)?;
    let json = serde_json::to_string_pretty(meta)
        .map_err(|e| EvalError::runtime(format!("meta serialization: {e}")))?;
    fs::write(out_dir.join("solve_meta.json"), json)?;
    Ok(())
}

fn apply_subset<T: Scalar>(
    stack: ImageStack<T>,
    subset: Option<&str>,
) -> EvalResult<ImageStack<T>> {
    match subset {
        None => Ok(stack),
        Some(spec) => {
            let idx = parse_subset(spec)?;
            if let Some(&bad) = idx.iter().find(|&&j| j >= stack.len()) {
                return Err(EvalError::validation(format!(
                    "subset index {bad} out of range ({} images)",
                    stack.len()
                )));
            }
            Ok(stack.permuted(&idx)?)
        }
    }
}

pub fn cmd_solve_l2<T: Scalar>(
    dataset_dir: &Path,
    out_dir: &Path,
    subset: Option<&str>,
    opts: &GlobalOpts,
) -> EvalResult<()> {
    let started = std::time::Instant::now();
    let (stack, _) = load_dataset::<T>(dataset_dir)?;
    let stack = apply_subset(stack, subset)?;
    let solution = l2_solve(&stack, &L2Options::default())?;
    let meta = SolveMeta {
        method: "l2".into(),
        rejected_pixels: solution.rejected_pixels,
        lights_used: stack.len(),
        runtime_seconds: if opts.deterministic { 0.0 } else { started.elapsed().as_secs_f64() },
    };
    write_solution(out_dir, &solution.normals, &meta)?;
    println!(
        "l2 solve: {} lights, {} rejected pixels -> {}",
        stack.len(),
        solution.rejected_pixels,
        out_dir.display()
    );
    Ok(())
}

pub fn cmd_solve_rmaff<T: Scalar>(
    dataset_dir: &Path,
    checkpoint: &Path,
    out_dir: &Path,
    subset: Option<&str>,
    opts: &GlobalOpts,
) -> EvalResult<()> {
    let started = std::time::Instant::now();
    let meta = ps_train::load_checkpoint_meta(checkpoint)?;
    if meta.precision != T::DTYPE {
        return Err(EvalError::validation(format!(
            "checkpoint stores {} parameters; rerun with --precision {}",
            meta.precision, meta.precision
        )));
    }
    let (stack, _) = load_dataset::<T>(dataset_dir)?;
    let stack = apply_subset(stack, subset)?;
    if stack.channels() != meta.image_channels {
        return Err(EvalError::validation(format!(
            "dataset has {}-channel images but the checkpoint was trained on {}",
            stack.channels(),
            meta.image_channels
        )));
    }
    let mut store = ParamStore::<T>::new();
    let mut rng = Rng::from_seed(0);
    let net = RmaffPsn::new(&mut store, &meta.network, meta.image_channels, &mut rng)?;
    ps_train::load_checkpoint_params(checkpoint, &mut store)?;
    let normals = network_forward(&net, &mut store, &stack)?;
    let meta_out = SolveMeta {
        method: "rmaff".into(),
        rejected_pixels: 0,
        lights_used: stack.len(),
        runtime_seconds: if opts.deterministic { 0.0 } else { started.elapsed().as_secs_f64() },
    };
    write_solution(out_dir, &normals, &meta_out)?;
    println!("rmaff solve: {} lights -> {}", stack.len(), out_dir.display());
    Ok(())
}

pub fn load_prediction<T: Scalar>(path: &Path) -> EvalResult<NormalMap<T>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("png") => load_normal_png(path),
        Some("pfm") => read_pfm_normals(path),
        other => Err(EvalError::validation(format!(
            "prediction {} must be .png or .pfm (got {:?})",
            path.display(),
            other
        ))),
    }
}

pub fn cmd_eval<T: Scalar>(
    pred_path: &Path,
    dataset_dir: &Path,
    out: Option<&Path>,
    max_degrees: f64,
    opts: &GlobalOpts,
) -> EvalResult<f64> {
    let started = std::time::Instant::now();
    let pred: NormalMap<T> = load_prediction(pred_path)?;
    let gt_path = dataset_dir.join("normal_gt.pfm");
    if !gt_path.exists() {
        return Err(EvalError::validation(format!(
            "{} has no normal_gt.pfm to evaluate against",
            dataset_dir.display()
        )));
    }
    let gt: NormalMap<T> = read_pfm_normals(&gt_path)?;
    let scene = dataset_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".into());
    let runtime = if opts.deterministic { 0.0 } else { started.elapsed().as_secs_f64() };
    let (report, map) = eval_report(scene, &pred, &gt, runtime)?;
    let out_dir = out
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| pred_path.parent().unwrap_or(Path::new(".")).to_path_buf());
    fs::create_dir_all(&out_dir)?;
    let json = serde_json::to_string_pretty(&report)
        .map_err(|e| EvalError::runtime(format!("report serialization: {e}")))?;
    fs::write(out_dir.join("eval_report.json"), json)?;
    let rgb = map.to_png_rgb(max_degrees);
    let img = image::RgbImage::from_vec(map.width as u32, map.height as u32, rgb)
        .ok_or_else(|| EvalError::runtime("error map buffer size"))?;
    img.save(out_dir.join("error_map.png"))
        .map_err(|e| EvalError::runtime(format!("write error_map.png: {e}")))?;
    println!("MAE {:.4} deg (p50 {:.4}, p90 {:.4}) over {} pixels", report.mae_degrees, report.percentiles.p50, report.percentiles.p90, report.masked_pixels);
    Ok(report.mae_degrees)
}

/// Loads every scene under the root, 99:1 split (last scenes are validation).
pub fn load_split<T: Scalar>(root: &Path) -> EvalResult<(Vec<Scene<T>>, Vec<Scene<T>>)> {
    let dirs = scene_dirs(root)?;
    let mut scenes = Vec::with_capacity(dirs.len());
    for (name, dir) in &dirs {
        let (stack, gt) = load_dataset::<T>(dir)?;
        let gt = gt.ok_or_else(|| {
            EvalError::validation(format!("scene {name} has no normal_gt.pfm (required to train)"))
        })?;
        scenes.push((stack, gt));
    }
    let n = scenes.len();
    if n < 2 {
        return Err(EvalError::validation("training needs at least two scenes (train + val)"));
    }
    let val_count = (n as f64 / 100.0).round().max(1.0) as usize;
    let train = scenes[..n - val_count].to_vec();
    let val = scenes[n - val_count..].to_vec();
    Ok((train, val))
}

fn train_config<T: Scalar>(cfg: &ToolkitConfig, opts: &GlobalOpts) -> TrainConfig {
    let mut tc = cfg.train_or_default();
    tc.seed = opts.seed;
    if opts.deterministic {
        tc.log_wall_clock = false;
    }
    tc
}

pub fn cmd_train<T: Scalar>(
    config_path: &Path,
    train_dir: &Path,
    out_dir: &Path,
    opts: &GlobalOpts,
) -> EvalResult<()> {
    let cfg = ToolkitConfig::load(config_path)?;
    let net_cfg = cfg.network_or_default();
    let tc = train_config::<T>(&cfg, opts);
    let (train, val) = load_split::<T>(train_dir)?;
    let channels = train[0].0.channels();
    let mut store = ParamStore::<T>::new();
    let mut rng = Rng::from_seed(opts.seed).split(STREAM_INIT);
    let net = RmaffPsn::new(&mut store, &net_cfg, channels, &mut rng)?;
    let result = fit(
        &net,
        &mut store,
        &train,
        &val,
        &tc,
        &FitOptions { out_dir: Some(out_dir.to_path_buf()), resume_from: None },
    )?;
    println!(
        "trained {} epochs; best epoch {} with val MAE {:.4} deg ({})",
        tc.epochs,
        result.best_epoch,
        result.best_val_mae,
        result
            .best_checkpoint
            .as_deref()
            .map(|p| p.display().to_string())
            .unwrap_or_else(|| "in-memory".into())
    );
    Ok(())
}

pub fn cmd_ablate<T: Scalar>(
    config_path: &Path,
    train_dir: &Path,
    out_dir: &Path,
    opts: &GlobalOpts,
) -> EvalResult<()> {
    let cfg = ToolkitConfig::load(config_path)?;
    let base_net_cfg = cfg.network_or_default();
    let tc = train_config::<T>(&cfg, opts);
    let (train, val) = load_split::<T>(train_dir)?;
    let channels = train[0].0.channels();
    fs::create_dir_all(out_dir)?;
    let init_root = Rng::from_seed(opts.seed).split(STREAM_INIT);
    let mut rows = Vec::new();
    for (k, variant) in Variant::ALL.into_iter().enumerate() {
        let net_cfg = NetworkConfig { variant, ..base_net_cfg.clone() };
        let mut store = ParamStore::<T>::new();
        let mut rng = init_root.split(k as u64);
        let net = RmaffPsn::new(&mut store, &net_cfg, channels, &mut rng)?;
        let sub = out_dir.join(variant.name());
        let result = fit(
            &net,
            &mut store,
            &train,
            &val,
            &tc,
            &FitOptions { out_dir: Some(sub), resume_from: None },
        )?;
        let mut best = result.best_params;
        let mut cells = Vec::new();
        for (i, scene) in val.iter().enumerate() {
            let pred = network_forward(&net, &mut best, &scene.0)?;
            let mae = crate::metrics::mae(&pred, &scene.1)?;
            cells.push((format!("val_{i:02}"), mae));
        }
        println!("{}: best val MAE {:.4} deg", variant.name(), result.best_val_mae);
        rows.push((variant.name().to_string(), cells));
    }
    let table = ablation_table(&rows)?;
    fs::write(out_dir.join("ablation.tsv"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn cmd_gradcheck(config_path: Option<&Path>) -> EvalResult<()> {
    let net_cfg = match config_path {
        Some(p) => {
            let cfg = ToolkitConfig::load(p)?;
            cfg.network.unwrap_or_else(NetworkConfig::tiny)
        }
        None => NetworkConfig::tiny(),
    };
    net_cfg.validate().map_err(EvalError::from)?;
    let started = std::time::Instant::now();
    let (items, max) = crate::gradcheck_suite::full_suite(&net_cfg)?;
    for item in &items {
        println!("{:<24} max relative error {:.3e}", item.name, item.max_rel_err);
    }
    let pass = max < 1e-4;
    println!(
        "gradcheck: {} checks, max relative error {:.3e} in {:.1}s -> {}",
        items.len(),
        max,
        started.elapsed().as_secs_f64(),
        if pass { "PASS" } else { "FAIL" }
    );
    if pass {
        Ok(())
    } else {
        Err(EvalError::runtime(format!("gradient check failed (max relative error {max:.3e})")))
    }
}
