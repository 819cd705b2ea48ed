//! The `rodflow` binary: exit codes, outputs and reproducibility.

use std::fs;
use std::path::Path;
use std::process::Command;

fn rodflow(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_rodflow")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("run.cfg");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn passing_run_exits_zero_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "identity.samples = 2\ngrid.dy = 0.02\n");
    let out = dir.path().join("out");
    let o = rodflow(&["functional-identity", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["config"]["identity.samples"], "2");
    assert!(out.join("functional_identity.csv").exists());
}

#[test]
fn failing_threshold_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "identity.samples = 2\ngrid.dy = 0.02\ncheck.tol = 1e-14\n");
    let out = dir.path().join("out");
    let o = rodflow(&["functional-identity", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let empty = write_config(dir.path(), "# nothing here\n");
    assert_eq!(rodflow(&["steady-state", "--config", &empty, "--out", out]).status.code(), Some(2));
    let unknown = write_config(dir.path(), "grid.dx = 0.1\n");
    assert_eq!(rodflow(&["steady-state", "--config", &unknown, "--out", out]).status.code(), Some(2));
    let bad = write_config(dir.path(), "model.alpha = 1.5\n");
    assert_eq!(rodflow(&["steady-state", "--config", &bad, "--out", out]).status.code(), Some(2));
    assert_eq!(rodflow(&["steady-state", "--out", out]).status.code(), Some(2));
    let missing = dir.path().join("missing.cfg");
    assert_eq!(rodflow(&["steady-state", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn same_seed_gives_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "continuum.ns = 20, 40\ncontinuum.seeds = 3\npde.dy = 0.02\n");
    let mut csv = Vec::new();
    for (k, threads) in ["1", "2", "1"].iter().enumerate() {
        let out = dir.path().join(format!("out{k}"));
        let seed = if k == 2 { "8" } else { "7" };
        let o = rodflow(&["continuum-limit", "--config", &cfg, "--seed", seed, "--threads", threads, "--out", out.to_str().unwrap()]);
        assert!(matches!(o.status.code(), Some(0) | Some(1)), "{}", String::from_utf8_lossy(&o.stderr));
        csv.push(fs::read(out.join("continuum.csv")).unwrap());
    }
    assert_eq!(csv[0], csv[1]);
    assert_ne!(csv[0], csv[2]);
}
