use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(format!("network{name}.json"))
}

fn fundnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fundnet")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

fn write_tmp(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn network_a_has_two_nontrivial_synchrony_patterns() {
    let v = json(&fundnet(&["synchrony", fixture("A").to_str().unwrap()]));
    let nontrivial: Vec<&str> = v["nontrivial"].as_array().unwrap().iter().map(|s| s.as_str().unwrap()).collect();
    assert_eq!(nontrivial, ["{1,2,3}", "{1}{2,3}"]);
}

#[test]
fn completed_monoids_have_the_expected_sizes() {
    for (name, size) in [("A", 3), ("B", 4), ("C", 5)] {
        let v = json(&fundnet(&["complete", fixture(name).to_str().unwrap()]));
        assert_eq!(v["size"], size, "network {name}");
        assert_eq!(v["table"].as_array().unwrap().len(), size);
    }
}

#[test]
fn fundamental_network_output_is_a_valid_network_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = fundnet(&["fundamental", fixture("C").to_str().unwrap()]);
    assert!(out.status.success());
    let path = write_tmp(dir.path(), "fund.json", &String::from_utf8(out.stdout).unwrap());
    // the fundamental network of a fundamental network is itself
    let v = json(&fundnet(&["complete", &path]));
    assert_eq!(v["size"], 5);
}

#[test]
fn input_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(fundnet(&["complete", missing.to_str().unwrap()]).status.code(), Some(2));
    let garbage = write_tmp(dir.path(), "garbage.json", "{ not json");
    assert_eq!(fundnet(&["complete", &garbage]).status.code(), Some(2));
    let range = write_tmp(dir.path(), "range.json", r#"{"cells": 2, "maps": [{"target": [3, 1]}]}"#);
    let out = fundnet(&["synchrony", &range]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("out of range"));
    assert_eq!(fundnet(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn a_hyperbolic_origin_is_reported_as_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"{"cells": 3, "maps": [{"target": [2, 3, 3]}, {"target": [3, 3, 3]}],
        "response": {"degree": 2, "terms": [
            {"monomial": [1, 0, 0, 0], "coeff": -1.0},
            {"monomial": [0, 1, 0, 0], "coeff": 0.5},
            {"monomial": [2, 0, 0, 0], "coeff": 1.0}]}}"#;
    let path = write_tmp(dir.path(), "hyperbolic.json", text);
    let out = fundnet(&["reduce", &path]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn branches_on_network_b_follow_the_asymptotic_table() {
    let v = json(&fundnet(&["branches", fixture("B").to_str().unwrap(), "--seed", "3", "--jobs", "2"]));
    assert_eq!(v["meta"]["seed"], 3);
    let table = v["table"].as_array().unwrap();
    let exponent = |kind: &str| {
        table.iter().find(|r| r["kind"] == kind).and_then(|r| r["exponent"].as_f64()).unwrap()
    };
    assert!((exponent("Full") - 1.0).abs() < 0.05);
    assert!((exponent("Partial") - 1.0).abs() < 0.05);
    assert!((exponent("None") - 0.5).abs() < 0.05);
    // the square-root pair lives on one side only
    let sides: Vec<i64> = v["branches"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|b| b["kind"] == "None")
        .map(|b| b["side"].as_i64().unwrap())
        .collect();
    assert_eq!(sides.len(), 2);
    assert_eq!(sides[0], sides[1]);
}

#[test]
fn report_is_byte_identical_across_runs() {
    let dirs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for (d, jobs) in dirs.iter().zip(["1", "3"]) {
        let out = fundnet(&[
            "report",
            fixture("C").to_str().unwrap(),
            "--seed",
            "7",
            "--jobs",
            jobs,
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["report.json", "branches.csv", "diagram.svg"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert!(!a.is_empty());
        assert!(a == b, "{name} differs between runs");
    }
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dirs[0].path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["meta"]["seed"], 7);
    assert!(report["meta"]["draw_attempt"].as_u64().unwrap() >= 1);
}

#[test]
fn simulate_writes_a_csv_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("traj.csv");
    let out = fundnet(&[
        "simulate",
        fixture("B").to_str().unwrap(),
        "--lambda",
        "-0.005",
        "--x0",
        "0.01,-0.02,0.005",
        "--t-end",
        "1",
        "--step",
        "0.1",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,x1,x2,x3");
    assert_eq!(lines.len(), 12);
    assert!(lines[1].starts_with("0.000000e0,1.000000000000e-2,-2.000000000000e-2"));
    let bad = fundnet(&["simulate", fixture("B").to_str().unwrap(), "--x0", "0.1,0.2"]);
    assert_eq!(bad.status.code(), Some(2));
}
