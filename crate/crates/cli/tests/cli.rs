use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn podlb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_podlb")).args(args).env_remove("PODLB_OUT").output().unwrap()
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p
}

fn run_ok(args: &[&str]) {
    let out = podlb(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn regime_reports_finite_delay() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"n": 10000, "gamma": 0.3, "m": 2, "b": 6}"#);
    let out = dir.path().join("out");
    run_ok(&["regime", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let doc = read_json(out.join("regime.json"));
    let sol = &doc["result"]["solution"];
    assert_eq!(sol["regime_class"], "finite_delay");
    let d = sol["d_real"].as_f64().unwrap();
    assert!((d.powi(2) - 4.0 * 1e4f64.powf(0.3) * d.ln()).abs() < 1e-9 * d * d);
    assert_eq!(doc["metadata"]["command"], "regime");
    assert_eq!(doc["metadata"]["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn missing_config_exits_2_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let missing = dir.path().join("nope.json");
    let res = podlb(&["simulate", "--config", missing.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&res.stderr).unwrap();
    assert_eq!(err["error"], "config");
    assert_eq!(err["exit_code"], 2);
    assert!(!out.exists());
}

#[test]
fn invalid_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "c.json", r#"{"n": 100, "gamma": 0.7, "d": 2, "b": 4}"#);
    let res = podlb(&["exact", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn too_large_exact_instance_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "c.json", r#"{"n": 5000, "lambda": 4000, "d": 2, "b": 10}"#);
    let res = podlb(&["exact", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"n": 200, "gamma": 0.3, "m": 2, "b": 5, "seed": 9}"#);
    let cfg = cfg.to_str().unwrap();
    let commands: &[&[&str]] = &[
        &["simulate", "--events", "50000", "--reps", "3"],
        &["ode", "--t-end", "5"],
        &["fixedpoint"],
        &["bounds"],
        &["driftscan", "--scan-budget", "2000"],
        &["taylor"],
        &["sweep"],
    ];
    for cmd in commands {
        let mut runs = Vec::new();
        for k in 0..2 {
            let out = dir.path().join(format!("{}-{k}", cmd[0]));
            let mut args = cmd.to_vec();
            args.extend(["--config", cfg, "--out", out.to_str().unwrap()]);
            run_ok(&args);
            runs.push(outputs(&out));
        }
        assert!(!runs[0].is_empty());
        assert_eq!(runs[0], runs[1], "{}", cmd[0]);
        for (name, bytes) in &runs[0] {
            let text = String::from_utf8_lossy(bytes);
            assert!(text.contains("\"config_sha256\""), "{name} lacks metadata");
            assert!(text.contains("\"version\""), "{name} lacks metadata");
        }
    }
}

#[test]
fn seed_changes_the_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"n": 50, "gamma": 0.3, "d": 3, "b": 4}"#);
    let cfg = cfg.to_str().unwrap();
    let mut files = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(seed);
        run_ok(&["simulate", "--events", "20000", "--seed", seed, "--config", cfg, "--out", out.to_str().unwrap()]);
        files.push(std::fs::read(out.join("trajectory.csv")).unwrap());
    }
    assert_ne!(files[0], files[1]);
}

#[test]
fn simulate_reports_estimates_and_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"n": 1000, "gamma": 0.3, "m": 2, "b": 5, "seed": 4}"#);
    let out = dir.path().join("out");
    run_ok(&[
        "simulate", "--events", "400000", "--at-least", "2:900", "--config", cfg.to_str().unwrap(), "--out",
        out.to_str().unwrap(),
    ]);
    let est = read_json(out.join("estimate.json"));
    let labels: Vec<&str> = est["result"]["labels"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert!(labels.contains(&"P(s_2>=900)") && labels.contains(&"joint"));
    assert_eq!(est["result"]["estimate"]["n_batches"], 32);
    let verdict = read_json(out.join("verdict.json"));
    assert!(verdict["result"]["containment"]["joint"]["value"].as_f64().is_some());
    assert_eq!(verdict["result"]["profile"]["short_predicted"].as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# {"));
    assert_eq!(lines.next().unwrap(), "rep,t,s_1,s_2,s_3,s_4,s_5");
}

#[test]
fn sweep_covers_every_regime_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"n": 1000, "gamma": 0.45, "d": 2, "b": 4}"#);
    let out = dir.path().join("out");
    run_ok(&["sweep", "--n", "1e15", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines().skip(1);
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let class_col = header.iter().position(|&h| h == "regime_class").unwrap();
    let d_col = header.iter().position(|&h| h == "d").unwrap();
    let order = ["infinite_delay_open", "infinite_delay_polylog", "finite_delay", "zero_delay"];
    let mut ranks = Vec::new();
    let mut last_d = 0.0;
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let d: f64 = cells[d_col].parse().unwrap();
        assert!(d > last_d);
        last_d = d;
        ranks.push(order.iter().position(|&c| c == cells[class_col]).unwrap());
    }
    assert!(ranks.windows(2).all(|w| w[0] <= w[1]), "{ranks:?}");
    for (k, class) in order.iter().enumerate() {
        assert!(ranks.contains(&k), "no {class} row");
    }
}

#[test]
fn driftscan_series_records_first_holding_n() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"n": 1000, "gamma": 0.1, "m": 1, "b": 6}"#);
    let out = dir.path().join("out");
    run_ok(&[
        "driftscan", "--n-grid", "1e2,1e3,1e4", "--scan-budget", "2000", "--config", cfg.to_str().unwrap(), "--out",
        out.to_str().unwrap(),
    ]);
    let doc = read_json(out.join("scan_series.json"));
    assert_eq!(doc["result"]["first_holding_n"].as_f64(), Some(1e3));
    assert_eq!(doc["result"]["reports"].as_array().unwrap().len(), 3);
}
