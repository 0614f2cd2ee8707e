use std::path::Path;
use std::process::{Command, Output};

use privsel::emit::{read_json, CSV_HEADER};

fn privsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privsel"))
        .args(args)
        .output()
        .expect("binary runs")
}

const SMALL: &[&str] = &["--d", "64", "--k", "4", "--n", "200", "--beta", "2", "--trials", "40", "--seed", "7"];

fn topk_to(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["topk", "--mech", "rnm", "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    args.extend_from_slice(extra);
    privsel(&args)
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    assert!(topk_to(&a, &[]).status.success());
    assert!(topk_to(&b, &[]).status.success());
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    assert!(String::from_utf8(text).unwrap().starts_with(CSV_HEADER));
}

#[test]
fn json_output_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    assert!(topk_to(&path, &["--format", "json"]).status.success());
    let records = read_json(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].config.mechanism, "rnm");
    assert_eq!(records[0].config.trials, 40);
    assert_eq!(records[0].runtime_s, 0.0);
}

#[test]
fn per_trial_rows_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let rows = dir.path().join("rows.csv");
    let out = topk_to(&dir.path().join("r.csv"), &["--per-trial", rows.to_str().unwrap()]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(rows).unwrap().lines().count(), 41);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    std::fs::write(
        &config,
        r#"{"kind": "topk", "d": 64, "k": 4, "n": 200, "beta_sym": 2, "mechanism": "peeling", "epsilon": 1, "delta": "paper", "trials": 10, "master_seed": 3, "reference": "empirical"}"#,
    )
    .unwrap();
    let out = privsel(&["topk", "--config", config.to_str().unwrap(), "--mech", "nonprivate", "--format", "json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records = read_json(out.stdout.as_slice()).unwrap();
    assert_eq!(records[0].config.mechanism, "nonprivate");
    assert_eq!(records[0].config.master_seed, 3);
    assert_eq!(records[0].err_mean, Some(0.0));
}

#[test]
fn sweep_emits_one_row_per_value() {
    let mut args = vec!["sweep", "--axis", "epsilon", "--values", "0.5,1,2", "--mech", "peeling"];
    args.extend_from_slice(SMALL);
    let out = privsel(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn config_errors_exit_with_two() {
    assert_eq!(privsel(&["topk", "--mech", "bogus"]).status.code(), Some(2));
    assert_eq!(privsel(&["sweep", "--axis", "trials", "--values", "1"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"kind": "topk", "colour": 1}"#).unwrap();
    let out = privsel(&["topk", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn missing_output_directory_is_an_io_error() {
    let out = topk_to(Path::new("/nonexistent/dir/out.csv"), &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn verify_reports_json() {
    let out = privsel(&["verify"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passed"], true);
    assert!(report["checks"].as_array().unwrap().len() >= 9);
}
