use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn bgwtilt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bgwtilt")).args(args).output().expect("binary runs")
}

fn run_with_report(dir: &Path, args: &[&str]) -> (i32, Value) {
    let out = dir.join("report.json");
    let mut full: Vec<&str> = args.to_vec();
    full.extend(["--out", out.to_str().unwrap()]);
    let o = bgwtilt(&full);
    let report = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    (o.status.code().unwrap(), report)
}

#[test]
fn check_on_counterexample_passes_empty_word() {
    let dir = tempfile::tempdir().unwrap();
    let model = data("remark.json");
    let (code, report) = run_with_report(dir.path(), &["check", "--model", model.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(report["schema"], 1);
    assert_eq!(report["assumptions"]["empty_word"]["verdict"], "pass");
}

#[test]
fn criticalize_finds_root_two() {
    let dir = tempfile::tempdir().unwrap();
    let model = data("subcritical_binary.json");
    let params = dir.path().join("params.json");
    let (code, report) = run_with_report(
        dir.path(),
        &["criticalize", "--model", model.to_str().unwrap(), "--params-out", params.to_str().unwrap()],
    );
    assert_eq!(code, 0);
    let b: f64 = report["params"]["b"][0].as_str().unwrap().parse().unwrap();
    assert!((b - 2f64.sqrt()).abs() < 1e-10, "b = {b}");

    let tilted = dir.path().join("tilted.json");
    let o = bgwtilt(&[
        "tilt",
        "--model",
        model.to_str().unwrap(),
        "--params",
        params.to_str().unwrap(),
        "--model-out",
        tilted.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let (code, report) = run_with_report(dir.path(), &["check", "--model", tilted.to_str().unwrap()]);
    assert_eq!(code, 0);
    let rho = report["assumptions"]["spectral_radius"].as_f64().unwrap();
    assert!((rho - 1.0).abs() < 1e-8, "rho = {rho}");
}

#[test]
fn unreachable_condition_is_empty_not_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let model = data("subcritical_binary.json");
    let (code, report) =
        run_with_report(dir.path(), &["enumerate", "--model", model.to_str().unwrap(), "--g", "2"]);
    assert_eq!(code, 0);
    assert_eq!(report["empty"], true);
    assert_eq!(report["z"], "0");
}

#[test]
fn malformed_model_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        "{\n \"name\": \"x\",\n \"num_types\": 1,\n \"gamma\": [1],\n \"law\": {\"kind\": \"ordered\", \"types\": [{\"entries\": [{\"word\": [], \"prob\": \"half\"}]}]}}\n",
    )
    .unwrap();
    let o = bgwtilt(&["check", "--model", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 5"), "{err}");
    assert!(err.contains("column"), "{err}");
}

#[test]
fn counterexample_pair_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let (code, report) = run_with_report(
        dir.path(),
        &[
            "equiv-test",
            "--model",
            data("remark.json").to_str().unwrap(),
            "--against",
            data("remark_tilde.json").to_str().unwrap(),
            "--max-size",
            "8",
        ],
    );
    assert_eq!(code, 2);
    assert_eq!(report["exit_code"], 2);
}

#[test]
fn tilt_certifies_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (code, report) =
        run_with_report(dir.path(), &["equiv-test", "--model", data("subcritical_binary.json").to_str().unwrap()]);
    assert_eq!(code, 0);
    assert_eq!(report["schema"], 1);
}

#[test]
fn seeded_reports_are_identical() {
    let model = data("two_type.json");
    let args = ["sample", "--model", model.to_str().unwrap(), "--g", "9", "--count", "50", "--seed", "4"];
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let (c1, r1) = run_with_report(first.path(), &args);
    let (c2, r2) = run_with_report(second.path(), &args);
    assert_eq!((c1, c2), (0, 0));
    assert_eq!(r1, r2);
}

#[test]
fn kesten_balls_of_binary_law_are_cherries() {
    let dir = tempfile::tempdir().unwrap();
    let (code, report) = run_with_report(
        dir.path(),
        &["kesten-sample", "--model", data("critical_binary.json").to_str().unwrap(), "--count", "200", "--seed", "1"],
    );
    assert_eq!(code, 0);
    assert_eq!(report["balls"], serde_json::json!({ "1:2 1:0 1:0": 200 }));
}
