use std::path::Path;
use std::process::{Command, Output};

use riesz_lab::commands::EstimateReport;
use riesz_lab::observed::{write_observed, Observed};
use riesz_lab::ReplicationReport;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_riesz-lab")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = r#"{
    "name": "two-units",
    "n": 2,
    "design": {"type": "bernoulli", "p": 0.5},
    "spaces": {"type": "sutva"},
    "functionals": {"type": "contrast"},
    "truth": [[1.0, 0.0], [2.0, 1.0]],
    "observed": "observed.csv",
    "seed": 3,
    "reps": 40
}"#;

#[test]
fn lists_builtins() {
    let out = lab(&["--list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in riesz_lab::scenarios::NAMES {
        assert!(text.lines().any(|l| l == *name));
    }
}

#[test]
fn config_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lab(&["--builtin", "no-such", "simulate"]).status.code(), Some(3));
    assert_eq!(lab(&["simulate"]).status.code(), Some(3));
    assert_eq!(lab(&["--builtin", "reference", "--alpha", "2", "simulate"]).status.code(), Some(3));
    let bad = write_config(dir.path(), &SMALL.replace("\"n\": 2", "\"n\": 3"));
    let out = lab(&["--config", &bad, "estimate"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config error"));
    let missing = write_config(dir.path(), SMALL);
    assert_eq!(lab(&["--config", &missing, "estimate"]).status.code(), Some(3));
}

#[test]
fn positivity_failures_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &SMALL.replace("\"p\": 0.5", "\"p\": 1.0"));
    let out = lab(&["--config", &cfg, "--format", "text", "positivity"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAILS"));
    let out = lab(&["--config", &cfg, "simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("null direction"));
    assert_eq!(lab(&["--builtin", "reference", "positivity"]).status.code(), Some(0));
}

#[test]
fn estimate_from_observed_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let obs = Observed {
        outcomes: vec![1.0, 1.0],
        assignment: riesz_core::Assignment::new(vec![1.0, 0.0]),
    };
    write_observed(std::fs::File::create(dir.path().join("observed.csv")).unwrap(), &obs).unwrap();
    let out_path = dir.path().join("estimate.json");
    let out = lab(&["--config", &cfg, "--out", out_path.to_str().unwrap(), "estimate", "--with-variance"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let report: EstimateReport = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(report.source, "observed");
    // HT with p = 1/2: (1 * 2 + 1 * (-2)) / 2
    assert!(report.estimate.abs() < 1e-12);
    assert!(report.variance_estimate.unwrap() > 0.0);
    assert!(report.interval.unwrap().contains(0.0));
}

#[test]
fn simulate_respects_overrides() {
    let out = lab(&["--builtin", "sutva-small", "--reps", "25", "--seed", "11", "simulate"]);
    assert!(out.status.success());
    let r: ReplicationReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r.reps, 25);
    assert_eq!(r.seeds.master, 11);
    assert_eq!(r.seeds.first, Some(riesz_lab::simulate::replicate_seed(11, 0)));
    assert!((0.0..=1.0).contains(&r.coverage.unwrap()));
}

#[test]
fn replicate_rows_file() {
    let dir = tempfile::tempdir().unwrap();
    let rows = dir.path().join("rows.csv");
    let out = lab(&["--builtin", "reference", "--reps", "7", "simulate", "--replicates", rows.to_str().unwrap()]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(rows).unwrap();
    assert_eq!(text.lines().count(), 8);
    assert!(text.starts_with("replicate,seed,estimate,variance_estimate,covered"));
}

#[test]
fn oracle_and_diagnose_formats() {
    let out = lab(&["--builtin", "reference", "--format", "csv", "oracle", "--with-variance"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("reference,2,0,"));

    let out = lab(&["--builtin", "exposure-cycle", "--format", "text", "diagnose", "--p", "8", "--q", "8"]);
    assert!(!out.status.success());
    let out = lab(&["--builtin", "exposure-cycle", "--format", "json", "diagnose", "--p", "8", "--q", "2.6666666666666665"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["scenario"], "exposure-cycle");
    assert!(v["opnorm"].as_f64().unwrap() > 0.0);
}
