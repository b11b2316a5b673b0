use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn qdyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdyn")).args(args).output().expect("binary runs")
}

fn bundled(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name).display().to_string()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qdyn-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn write_cfg(dir: &Path, text: &str) -> String {
    std::fs::create_dir_all(dir).unwrap();
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn manifests_in(dir: &Path) -> usize {
    std::fs::read_dir(dir).unwrap().filter(|e| e.as_ref().unwrap().file_name() == "manifest.json").count()
}

#[test]
fn frozen_kernel_bundle_round_trip() {
    let out = scratch("fk");
    let o = qdyn(&["train", "--config", &bundled("frozen_kernel.cfg"), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&out.join("report.json"));
    assert_eq!(report["predicted"]["kind"], "frozen-kernel");
    assert_eq!(report["empirical"]["kind"], "frozen-kernel");
    for f in ["config.json", "trace.csv", "kernels.jsonl", "report.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    assert_eq!(manifests_in(&out), 1);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);

    // Re-classifying from disk reproduces the report.
    let again = scratch("fk-classify");
    let o = qdyn(&["classify", "--trace", out.to_str().unwrap(), "--out", again.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r2 = json(&again.join("report.json"));
    assert_eq!(r2["empirical"], report["empirical"]);
    assert_eq!(r2["predicted"], report["predicted"]);

    // Stability from the trace: the measured point sits at the predicted sink.
    let o = qdyn(&["stability", "--trace", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let s: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(s["charges"].as_array().unwrap().iter().all(|c| c.as_f64().unwrap() > 0.0));
}

#[test]
fn zero_steps_gives_initial_snapshot_only() {
    let dir = scratch("zero");
    let cfg = write_cfg(&dir, "targets = 0.3, -0.5\nsteps = 0\n");
    let out = dir.join("out");
    let o = qdyn(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("0,"));
}

#[test]
fn config_errors_name_the_field() {
    let dir = scratch("bad");
    for (text, field) in [
        ("targets = 0.3, nope\n", "targets"),
        ("targets = 0.3\neta = -1\n", "eta"),
        ("targets = 0.3\nlearning_rate = 1\n", "learning_rate"),
        ("targets = 0.3\nobservable = x\n", "observable"),
        ("n_qubits = 2\ntargets = 0, 0, 0, 0, 0\n", "targets"),
    ] {
        let cfg = write_cfg(&dir, text);
        let o = qdyn(&["train", "--config", &cfg, "--out", dir.join("out").to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(1), "{text}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(&format!("`{field}`")), "{text}: {err}");
    }
    let o = qdyn(&["train", "--config", "/nonexistent.cfg", "--out", "/tmp/x"]);
    assert_eq!(o.status.code(), Some(1));
    let o = qdyn(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn binary_classification_labels_predict_frozen_error() {
    let out = scratch("binary");
    let o = qdyn(&["train", "--config", &bundled("binary_classification.cfg"), "--out", out.to_str().unwrap(), "--steps", "200"]);
    assert!(matches!(o.status.code(), Some(0) | Some(2)));
    assert_eq!(json(&out.join("report.json"))["predicted"]["kind"], "frozen-error");
}

#[test]
fn identical_runs_give_identical_csv() {
    let dir = scratch("det");
    let cfg = write_cfg(&dir, "targets = 0.3, -0.5\nsteps = 500\nseed = 3\n");
    let (a, b) = (dir.join("a"), dir.join("b"));
    for d in [&a, &b] {
        qdyn(&["train", "--config", &cfg, "--out", d.to_str().unwrap()]);
    }
    assert_eq!(std::fs::read(a.join("trace.csv")).unwrap(), std::fs::read(b.join("trace.csv")).unwrap());
    assert_eq!(std::fs::read(a.join("kernels.jsonl")).unwrap(), std::fs::read(b.join("kernels.jsonl")).unwrap());
}

#[test]
fn single_cell_sweep_matches_train() {
    let dir = scratch("sweep1");
    let cfg = write_cfg(&dir, "targets = 0.3, -0.5\nsteps = 300\nseed = 1\n[sweep]\naxis = seed\nvalues = 1\n");
    let (train_dir, sweep_dir) = (dir.join("train"), dir.join("sweep"));
    qdyn(&["train", "--config", &cfg, "--out", train_dir.to_str().unwrap()]);
    let o = qdyn(&["sweep", "--config", &cfg, "--out", sweep_dir.to_str().unwrap(), "--workers", "2"]);
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", String::from_utf8_lossy(&o.stderr));
    let cell = sweep_dir.join("cell_000").join("seed_1");
    assert_eq!(std::fs::read(train_dir.join("trace.csv")).unwrap(), std::fs::read(cell.join("trace.csv")).unwrap());
    let table = std::fs::read_to_string(sweep_dir.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 2);
    assert_eq!(manifests_in(&sweep_dir), 1);
    assert_eq!(manifests_in(&cell), 1);
}

#[test]
fn sweep_over_targets_writes_one_row_per_cell() {
    let dir = scratch("sweep-y");
    let cfg = write_cfg(
        &dir,
        "n_qubits = 2\nsize = 8\ntargets = 0.5, 0.5\nobservable = state_prep\nsteps = 200\n[sweep]\naxis = y1\nvalues = 0.2, 0.5, 0.8\nseeds = 0..2\n",
    );
    let out = dir.join("out");
    qdyn(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let table = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 4);
    let header: Vec<&str> = lines[0].split(',').collect();
    let pred = header.iter().position(|h| *h == "pred_K_0").unwrap();
    for row in &lines[1..] {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells[2], "2");
        assert!(cells[pred].parse::<f64>().unwrap() >= 0.0);
    }
}

#[test]
fn ensemble_frame_potentials() {
    let o = qdyn(&["ensemble", "--config", &bundled("ensemble_rh.cfg")]);
    assert_eq!(o.status.code(), Some(0));
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    let (mc, se) = (r["mc_estimate"].as_f64().unwrap(), r["mc_std_error"].as_f64().unwrap());
    assert_eq!(r["analytic"], 16.0);
    assert!((mc - 16.0).abs() < 3.0 * se, "{mc} ± {se}");

    let o = qdyn(&["ensemble", "--dim", "8", "--n-data", "0", "--pairs", "4000", "--seed", "5"]);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    let (mc, se) = (r["mc_estimate"].as_f64().unwrap(), r["mc_std_error"].as_f64().unwrap());
    assert!((mc - 2.0).abs() < 3.0 * se, "{mc} ± {se}");

    for k in 1..=3 {
        let o = qdyn(&["ensemble", "--dim", "4", "--n-data", "2", "--order", &k.to_string(), "--pairs", "4000"]);
        let r: Value = serde_json::from_slice(&o.stdout).unwrap();
        let (mc, se, lb) = (r["mc_estimate"].as_f64().unwrap(), r["mc_std_error"].as_f64().unwrap(), r["lower_bound"].as_f64().unwrap());
        assert!(lb <= mc + 3.0 * se, "k={k}: bound {lb} vs {mc} ± {se}");
    }
    let o = qdyn(&["ensemble", "--dim", "4", "--n-data", "9"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn stability_from_charges() {
    let o = qdyn(&["stability", "--charges", "2,2"]);
    let s: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s["predicted_stable_point"], serde_json::json!([2.0, 2.0]));
    let sink = s["survey"].as_array().unwrap().iter().find(|r| r["fixed_point"] == serde_json::json!([2.0, 2.0])).unwrap();
    assert_eq!(sink["class"], "sink");

    let o = qdyn(&["stability", "--charges", "-2,-2"]);
    let s: Value = serde_json::from_slice(&o.stdout).unwrap();
    let survey = s["survey"].as_array().unwrap();
    assert_eq!(survey.len(), 1);
    assert_eq!(survey[0]["fixed_point"], serde_json::json!([0.0, 0.0]));

    let o = qdyn(&["stability", "--charges", "2,-2"]);
    let s: Value = serde_json::from_slice(&o.stdout).unwrap();
    let origin = s["survey"].as_array().unwrap().iter().find(|r| r["fixed_point"] == serde_json::json!([0.0, 0.0])).unwrap();
    assert_eq!(origin["class"], "saddle");

    assert_eq!(qdyn(&["stability"]).status.code(), Some(1));
}

#[test]
fn flowfield_grid() {
    let out = scratch("flow");
    let o = qdyn(&["flowfield", "--charges", "2,-2", "--grid", "0,2,11", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("flowfield.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("g1,g2,dg1,dg2"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 121);
    assert!(rows.iter().flatten().all(|v| v.is_finite()));
    assert_eq!(manifests_in(&out), 1);
    let o = qdyn(&["flowfield", "--charges", "1,2,3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn validate_requires_state_prep() {
    let dir = scratch("validate-bad");
    let cfg = write_cfg(&dir, "targets = 5, 6\nsteps = 10\n[validate]\nseeds = 0..2\n");
    let o = qdyn(&["validate", "--config", &cfg, "--out", dir.join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`observable`"));
}

#[test]
fn validate_small_state_prep() {
    let dir = scratch("validate");
    let cfg = write_cfg(&dir, "n_qubits = 2\nsize = 16\ntargets = 5, 6\nobservable = state_prep\nsteps = 2000\n[validate]\nseeds = 0..3\n");
    let out = dir.join("out");
    let o = qdyn(&["validate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out.join("validation.json"));
    assert_eq!(r["traces"], 3);
    assert!(r["warnings"].as_array().unwrap().iter().any(|w| w.as_str().unwrap().contains("low statistical power")));
    assert_eq!(manifests_in(&out.join("seed_0")), 1);
}
