use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn palign(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_palign")).args(args).output().unwrap()
}

fn json_ok(args: &[&str]) -> Value {
    let out = palign(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn classify_reports_s1_exponents() {
    let v = json_ok(&["classify", "--p", "4", "--alpha", "0.5"]);
    assert_eq!(v["label"], "S1");
    assert!((v["V_exponent"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn regions_reports_critical_diameter() {
    let v = json_ok(&["regions", "--p", "2.5", "--alpha", "1.5", "--lambdaC", "1"]);
    assert!((v["D0_star"].as_f64().unwrap() - 0.3849).abs() < 1e-4);
    assert_eq!(v["scenario"], "S3");
}

#[test]
fn envelope_then_fit_recovers_borderline_rates() {
    let dir = tempfile::tempdir().unwrap();
    json_ok(&[
        "envelope",
        "--p",
        "3",
        "--alpha",
        "0",
        "--t-end",
        "1e6",
        "--out",
        path(dir.path()),
    ]);
    let csv = dir.path().join("run_traj.csv");
    let v = json_ok(&["fit", path(&csv)]);
    assert!((v["V"]["exponent"].as_f64().unwrap() - 1.0).abs() < 0.01);
    let log_v = v["log_corrected"]["V"]["log_power"].as_f64().unwrap();
    assert!(log_v.abs() < 0.05, "{log_v}");
}

#[test]
fn simulate_then_check_lyapunov() {
    let dir = tempfile::tempdir().unwrap();
    json_ok(&[
        "simulate",
        "--p",
        "2.5",
        "--alpha",
        "0.5",
        "--t-end",
        "1e3",
        "--out",
        path(dir.path()),
        "--runid",
        "pair",
    ]);
    let csv = dir.path().join("pair_traj.csv");
    let v = json_ok(&["check", path(&csv), "--kind", "lyapunov"]);
    assert_eq!(v["monotone"], true);
    let v = json_ok(&["check", path(&csv), "--kind", "fat-tail"]);
    assert_eq!(v["report"]["contained"], true);
}

#[test]
fn sweep_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(
        &cfg,
        "p_grid = [2.5, 4.0]\nalpha_grid = [0.5]\nic_set = [[1.0, 1.0]]\nengine = \"envelope\"\nt_end = 1e5\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let v = json_ok(&["sweep", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(v["rows"], 2);
    assert!(out.join("sweep.csv").exists() && out.join("sweep.json").exists());
}

#[test]
fn bad_invocations_fail() {
    assert!(!palign(&["simulate", "--p", "3", "--bogus"]).status.success());
    assert!(!palign(&["regions", "--alpha", "1"]).status.success());
    assert!(!palign(&["envelope", "--p", "3", "--coords", "S1"]).status.success());
    assert!(!palign(&["fit", "/nonexistent/traj.csv"]).status.success());
}
