use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn divlab(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_divlab"));
    cmd.args(args).env_remove("DIVLAB_WORKERS");
    if let Some(w) = workers {
        cmd.env("DIVLAB_WORKERS", w);
    }
    cmd.output().expect("binary runs")
}

fn small(battery: &[&str]) -> Value {
    json!({
        "name": "small",
        "dim": 1,
        "coefficients": { "preset": "identity", "scale": 1.0 },
        "grid": { "lo": -4.0, "hi": 4.0, "nx": 81, "horizon": 1.0, "nt": 64 },
        "ensemble": { "n_paths": 200, "seed": 3, "starts": 4, "paths_per_start": 20 },
        "max_level": 4,
        "battery": battery,
    })
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn run(dir: &Path, cfg: &Value, workers: Option<&str>) -> (Output, PathBuf) {
    let config = write_config(dir, "config.json", cfg);
    let out = dir.join("out");
    let output = divlab(
        &["run", config.to_str().unwrap(), "--out", out.to_str().unwrap()],
        workers,
    );
    (output, out)
}

#[test]
fn lists_every_check() {
    let out = divlab(&["list-checks"], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["kernel_oracle", "rough_field", "capacity", "sup_moment"] {
        assert!(text.contains(name), "{name} missing from:\n{text}");
    }
}

#[test]
fn passing_battery_exits_zero_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (out, dir_out) = run(dir.path(), &small(&["kernel_oracle", "zero_qv"]), None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("PASS kernel_oracle"));
    assert!(dir_out.join("report.json").is_file());
    assert!(dir_out.join("config.json").is_file());
    assert!(fs::read_dir(dir_out.join("ladders")).unwrap().count() > 0);
}

#[test]
fn filter_restricts_the_battery() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "c.json", &small(&["kernel_oracle", "zero_qv"]));
    let out_dir = dir.path().join("o");
    let out = divlab(
        &[
            "run",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--filter",
            "kernel_oracle",
        ],
        None,
    );
    assert!(out.status.success());
    let report: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["checks"].as_array().unwrap().len(), 1);
}

#[test]
fn failing_check_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(&["kernel_oracle"]);
    cfg["coefficients"]["scale"] = json!(2.0);
    cfg["theta"] = json!(1.0);
    let (out, _) = run(dir.path(), &cfg, None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL kernel_oracle"));
}

#[test]
fn coarse_time_step_is_a_structured_stability_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(&["kernel_oracle"]);
    cfg["grid"] = json!({ "lo": -5.0, "hi": 5.0, "nx": 401, "horizon": 1.0, "nt": 16 });
    let (out, _) = run(dir.path(), &cfg, None);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    assert_eq!(err["error"]["kind"], "stability");
    assert!(err["error"]["bound"].as_f64().unwrap() < err["error"]["tau"].as_f64().unwrap());
}

#[test]
fn unknown_field_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(&[]);
    cfg["bogus"] = json!(1);
    let (out, _) = run(dir.path(), &cfg, None);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
}

#[test]
fn empty_battery_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (out, _) = run(dir.path(), &small(&[]), None);
    assert!(out.status.success());
}

#[test]
fn identical_reports_compare_clean() {
    let dir = tempfile::tempdir().unwrap();
    let (out, out_dir) = run(dir.path(), &small(&["kernel_oracle"]), Some("1"));
    assert!(out.status.success());
    let report = out_dir.join("report.json");
    let cmp = divlab(&["compare", report.to_str().unwrap(), report.to_str().unwrap()], None);
    assert!(cmp.status.success());
    let diff: Value = serde_json::from_slice(&cmp.stdout).unwrap();
    assert!(diff["deltas"].as_array().unwrap().is_empty());
}

#[test]
fn invalid_worker_count_is_rejected() {
    for bad in ["0", "many"] {
        let out = divlab(&["list-checks"], Some(bad));
        assert!(!out.status.success(), "DIVLAB_WORKERS={bad} accepted");
    }
}
