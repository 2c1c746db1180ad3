use std::fs;
use std::path::Path;

use ps_eval_cli::run_cli;

fn pstk(args: &[&str]) -> i32 {
    let mut argv = vec!["pstk".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    run_cli(argv)
}

fn write_render_config(path: &Path, scenes: usize, size: usize, lights: usize) {
    write_render_config_opts(path, scenes, size, lights, false)
}

fn write_render_config_opts(path: &Path, scenes: usize, size: usize, lights: usize, lambertian: bool) {
    let (spec_hi, shadows) = if lambertian { (0.0, "false") } else { (0.3, "true") };
    let json = format!(
        r#"{{
            "config_version": 1,
            "render": {{
                "generate": {{
                    "count": {scenes}, "width": {size}, "height": {size},
                    "noise_sigma": 0.0, "spec_strength": [0.0, {spec_hi}],
                    "cast_shadows": {shadows}
                }},
                "lights": {{ "count": {lights}, "z_range": [0.5, 0.95] }}
            }},
            "network": {{
                "c_shallow": 4, "c_deep": 4, "c_branch": 4, "c_fused": 8,
                "attention_reduction": 4, "spatial_kernel": 3,
                "dense_layers": 2, "dense_growth": 4
            }},
            "train": {{
                "epochs": 2, "batch_size": 2, "patch": 8,
                "lights_per_sample": 3, "batches_per_epoch": 2, "micro_batch": 2
            }}
        }}"#
    );
    fs::write(path, json).unwrap();
}

#[test]
fn render_solve_eval_pipeline_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write_render_config_opts(&cfg, 1, 16, 4, true);
    let data = dir.path().join("data");
    assert_eq!(pstk(&["render", cfg.to_str().unwrap(), data.to_str().unwrap()]), 0);
    let scene = data.join("scene_000");
    assert!(scene.join("lights.txt").exists());
    assert!(scene.join("img_003.png").exists());
    assert!(scene.join("normal_gt.pfm").exists());

    let out = dir.path().join("solve");
    assert_eq!(
        pstk(&[
            "--precision",
            "f64",
            "solve",
            "--method",
            "l2",
            scene.to_str().unwrap(),
            out.to_str().unwrap()
        ]),
        0
    );
    let pred = out.join("normal_pred.png");
    assert!(pred.exists());

    assert_eq!(
        pstk(&[
            "--precision",
            "f64",
            "eval",
            pred.to_str().unwrap(),
            scene.to_str().unwrap()
        ]),
        0
    );
    assert!(out.join("eval_report.json").exists());
    assert!(out.join("error_map.png").exists());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("eval_report.json")).unwrap()).unwrap();
    // Noiseless Lambertian-ish scene: the solve should be very accurate.
    assert!(report["mae_degrees"].as_f64().unwrap() < 1.0);
}

#[test]
fn eval_dimension_mismatch_exits_one_and_names_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_a = dir.path().join("a.json");
    write_render_config(&cfg_a, 1, 16, 3);
    let cfg_b = dir.path().join("b.json");
    write_render_config(&cfg_b, 1, 12, 3);
    let data_a = dir.path().join("data_a");
    let data_b = dir.path().join("data_b");
    assert_eq!(pstk(&["render", cfg_a.to_str().unwrap(), data_a.to_str().unwrap()]), 0);
    assert_eq!(pstk(&["render", cfg_b.to_str().unwrap(), data_b.to_str().unwrap()]), 0);
    // Predict on A, evaluate against B: sizes differ -> validation error.
    let out = dir.path().join("solve");
    assert_eq!(
        pstk(&[
            "solve",
            "--method",
            "l2",
            data_a.join("scene_000").to_str().unwrap(),
            out.to_str().unwrap()
        ]),
        0
    );
    let code = pstk(&[
        "eval",
        out.join("normal_pred.png").to_str().unwrap(),
        data_b.join("scene_000").to_str().unwrap(),
    ]);
    assert_eq!(code, 1);
}

#[test]
fn unknown_flag_exits_one() {
    assert_eq!(pstk(&["--definitely-not-a-flag"]), 1);
    assert_eq!(pstk(&["solve", "--method", "warp", "x", "y"]), 1);
}

#[test]
fn rmaff_solve_requires_checkpoint() {
    assert_eq!(pstk(&["solve", "--method", "rmaff", "x", "y"]), 1);
}

#[test]
fn subset_parsing() {
    assert_eq!(ps_eval_cli::parse_subset("0-3,7").unwrap(), vec![0, 1, 2, 3, 7]);
    assert_eq!(ps_eval_cli::parse_subset("5").unwrap(), vec![5]);
    assert!(ps_eval_cli::parse_subset("3-1").is_err());
    assert!(ps_eval_cli::parse_subset("x").is_err());
}

#[test]
fn train_then_rmaff_solve_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write_render_config(&cfg, 3, 16, 4);
    let data = dir.path().join("data");
    assert_eq!(pstk(&["render", cfg.to_str().unwrap(), data.to_str().unwrap()]), 0);
    let run = dir.path().join("run");
    assert_eq!(
        pstk(&["train", cfg.to_str().unwrap(), data.to_str().unwrap(), run.to_str().unwrap()]),
        0
    );
    assert!(run.join("train_log.tsv").exists());
    assert!(run.join("best.txt").exists());
    let out = dir.path().join("pred");
    assert_eq!(
        pstk(&[
            "solve",
            "--method",
            "rmaff",
            "--checkpoint",
            run.join("epoch_001").to_str().unwrap(),
            "--subset",
            "0-2",
            data.join("scene_000").to_str().unwrap(),
            out.to_str().unwrap()
        ]),
        0
    );
    assert!(out.join("normal_pred.pfm").exists());
    // Wrong precision against an f32 checkpoint is a validation error.
    assert_eq!(
        pstk(&[
            "--precision",
            "f64",
            "solve",
            "--method",
            "rmaff",
            "--checkpoint",
            run.join("epoch_001").to_str().unwrap(),
            data.join("scene_000").to_str().unwrap(),
            out.to_str().unwrap()
        ]),
        1
    );
}

#[test]
fn ablate_writes_a_four_variant_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write_render_config(&cfg, 4, 16, 4);
    let data = dir.path().join("data");
    assert_eq!(pstk(&["render", cfg.to_str().unwrap(), data.to_str().unwrap()]), 0);
    let out = dir.path().join("ablate");
    assert_eq!(
        pstk(&["ablate", cfg.to_str().unwrap(), data.to_str().unwrap(), out.to_str().unwrap()]),
        0
    );
    let table = fs::read_to_string(out.join("ablation.tsv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 5, "header + 4 variants:\n{table}");
    assert!(lines[0].starts_with("Method\t"));
    assert!(lines[0].ends_with("\tAvg."));
    let variants: Vec<&str> = lines[1..].iter().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(variants, ["full", "no_rmaff", "single_rmaff", "no_attention"]);
    let cols = lines[0].split('\t').count();
    for line in &lines[1..] {
        assert_eq!(line.split('\t').count(), cols);
    }
}
