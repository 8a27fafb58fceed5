use std::fs;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gibbs-cl")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cli(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn simulate_then_calibrate() {
    let dir = tempfile::tempdir().unwrap();
    let lattice = dir.path().join("y.csv");
    let report = dir.path().join("report.json");
    let p = |x: &std::path::Path| x.to_str().unwrap().to_string();
    ok(&["simulate", "--model", "autologistic", "--theta", "-0.1,0.3", "--rows", "8", "--cols", "8", "--seed", "4", "--out", &p(&lattice)]);
    assert!(fs::read_to_string(&lattice).unwrap().starts_with("8,8,"));
    let text = ok(&["simulate", "--theta", "0.2", "--rows", "3", "--cols", "5"]);
    assert_eq!(text.lines().count(), 3);

    ok(&[
        "calibrate", "--input", &p(&lattice), "--model", "autologistic", "--block-side", "2", "--covariance-draws", "2000",
        "--seed", "7", "--out", &p(&report),
    ]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["maps"]["theta"].as_array().unwrap().len(), 2);
    assert_eq!(v["weights"].as_array().unwrap().len(), 5);
    assert_eq!(v["block_side"], 2);
}

#[test]
fn experiment_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp");
    let config = ok(&["experiment", "--experiment", "1", "--replicates", "1", "--print-config"]);
    let small = config
        .replace("rows = 16", "rows = 8")
        .replace("cols = 16", "cols = 8")
        .replace("block_side = 4", "block_side = 3")
        .replace("covariance_draws = 10000", "covariance_draws = 2000");
    assert_ne!(small, config);
    let path = dir.path().join("config.toml");
    fs::write(&path, small).unwrap();
    let table = ok(&["experiment", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(table.contains("cl_calibrated") && table.contains("pseudo"));
    assert!(out.join("replicates.csv").exists());
    let json = ok(&["metrics", "--out", out.to_str().unwrap(), "--json"]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["methods"].as_array().unwrap().len(), 3);
    assert_eq!(v["succeeded"], 1);
}

#[test]
fn bad_arguments_fail() {
    for args in [
        vec!["experiment", "--weight-option", "7", "--print-config"],
        vec!["experiment", "--experiment", "4", "--print-config"],
        vec!["experiment", "--profile", "huge"],
        vec!["simulate", "--model", "potts", "--theta", "0.1"],
        vec!["calibrate", "--input", "/nonexistent/y.txt"],
    ] {
        let out = cli(&args);
        assert!(!out.status.success(), "{args:?} succeeded");
    }
    let out = cli(&["experiment", "--weight-option", "7", "--print-config"]);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}
