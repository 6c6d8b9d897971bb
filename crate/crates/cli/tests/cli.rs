//! End-to-end runs of the `fixedevent` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fixedevent::data::{build_dataset, read_forecasts, read_outcomes, write_errors, HorizonMode};

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fixedevent")).args(args).output().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// German sample converted to an error file; returns its path.
fn german_errors(dir: &Path) -> PathBuf {
    let records = read_forecasts(&data("german_forecasts.csv")).unwrap();
    let outcomes = read_outcomes(&data("german_outcomes.csv")).unwrap();
    let path = dir.join("errors.csv");
    write_errors(&path, &build_dataset(&records, &outcomes, HorizonMode::Half).unwrap()).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fit_predict_evaluate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let errors = german_errors(dir.path());
    let fit = dir.path().join("fit.json");
    let intervals = dir.path().join("intervals.csv");
    let report = dir.path().join("report.json");

    let out = run(&["fit", "--data", s(&errors), "--model", "gauss", "--out", s(&fit)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&fit)["model"]["model"], "gauss");

    let out = run(&["predict", "--params", s(&fit), "--cases", s(&errors), "--out", s(&intervals)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = run(&["evaluate", "--intervals", s(&intervals), "--data", s(&errors), "--out", s(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = &json(&report)["summary"];
    assert_eq!(summary["n_cases"], 262);
    let coverage = summary["coverage"].as_f64().unwrap();
    assert!((0.6..=0.95).contains(&coverage), "in-sample coverage {coverage}");
}

#[test]
fn predict_on_horizon_list_writes_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let fit = dir.path().join("fit.json");
    let out = run(&[
        "fit", "--data", s(&data("us_forecasts.csv")), "--outcomes", s(&data("us_outcomes.csv")),
        "--model", "ar1", "--restarts", "0", "--out", s(&fit),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["predict", "--params", s(&fit), "--horizons", "1.5,12,22.5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 4, "{text}");
}

#[test]
fn misaligned_evaluate_fails_with_join_error() {
    let dir = tempfile::tempdir().unwrap();
    let errors = german_errors(dir.path());
    let intervals = dir.path().join("intervals.csv");
    std::fs::write(
        &intervals,
        "case_id,target_year,horizon,lower,upper,nominal_level\n1999:h3,1999,3,-1,1,0.8\n",
    )
    .unwrap();
    let out = run(&["evaluate", "--intervals", s(&intervals), "--data", s(&errors)]);
    assert_eq!(out.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"], "join");
}

#[test]
fn cv_report_lists_models_and_dm_tests() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("cv.json");
    let out = run(&[
        "cv", "--data", s(&data("german_forecasts.csv")), "--outcomes", s(&data("german_outcomes.csv")),
        "--models", "ar1,gauss12,qr12", "--restarts", "0", "--out", s(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&report);
    let summary = &v["summary"];
    assert_eq!(summary["iterations"], 20);
    assert_eq!(summary["models"].as_array().unwrap().len(), 3);
    assert_eq!(summary["dm_tests"].as_array().unwrap().len(), 3);
}

#[test]
fn benchmark_compares_models_with_survey_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("bench.json");
    let out = run(&[
        "benchmark", "--data", s(&data("us_forecasts.csv")), "--outcomes", s(&data("us_outcomes.csv")),
        "--benchmark", s(&data("us_benchmark.csv")), "--models", "gauss12", "--restarts", "0", "--out", s(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::metadata(&report).unwrap().len() > 0);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["fit", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let missing = run(&["fit", "--data", "/nonexistent/file.csv"]);
    assert_eq!(missing.status.code(), Some(3));
    let err: serde_json::Value = serde_json::from_slice(&missing.stderr).unwrap();
    assert_eq!(err["error"], "io");
    let bad_level = run(&["simulate", "--replications", "1", "--level", "1.5"]);
    assert_eq!(bad_level.status.code(), Some(2));
}
