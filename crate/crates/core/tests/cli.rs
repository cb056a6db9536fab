use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_p-enclose"))
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .args(args)
        .output()
        .unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join("out").join(name)).unwrap()
}

const SMALL: &str = r#"{
    "p": 3,
    "directions": 8,
    "taus": [4, 5, 6, 7],
    "domain": {"kind": "disk", "center": [0.15, 0.1], "radius": 0.5},
    "inclusion": {"kind": "empty"}
}"#;

#[test]
fn wolff_quadratic_period() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), r#"{"p": 2}"#, &["wolff"]);
    assert_eq!(out.status.code(), Some(0));
    let summary: serde_json::Value = serde_json::from_str(&read(dir.path(), "wolff_summary.json")).unwrap();
    let period = summary["period"].as_f64().unwrap();
    assert!((period - std::f64::consts::TAU).abs() < 1e-6, "{period}");
}

#[test]
fn wolff_table_has_uniform_step() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), r#"{"p": 3}"#, &["wolff"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = read(dir.path(), "wolff_profile.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("s,a,a_prime"));
    let s: Vec<f64> = lines.map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(s.len() > 100);
    let h = s[1] - s[0];
    assert!(h > 0.0);
    for w in s.windows(2) {
        assert!((w[1] - w[0] - h).abs() < 1e-9);
    }
}

#[test]
fn invalid_exponent_is_config_error() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), r#"{"p": 1}"#, &["wolff"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`p`"));
}

#[test]
fn negative_conductivity_is_config_error() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), r#"{"contrast": -2}"#, &["reconstruct"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_config_is_config_error() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), "{\"p\": ", &["wolff"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_is_config_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_p-enclose"))
        .args(["--config", "/nonexistent/config.json", "wolff"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_inclusion_reports_nothing_detected() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), SMALL, &["reconstruct"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("no inclusion detected"));
    assert!(read(dir.path(), "summary.txt").starts_with("no inclusion detected"));
    for k in 0..8 {
        assert!(dir.path().join("out").join(format!("sweep_{k:03}.csv")).exists());
    }
}

#[test]
fn reconstruction_is_independent_of_worker_count() {
    let config = r#"{
        "p": 2.5,
        "directions": 8,
        "taus": [4, 5, 6, 7],
        "inclusion": {"kind": "disk", "center": [0.2, 0.1], "radius": 0.25}
    }"#;
    let one = TempDir::new().unwrap();
    let four = TempDir::new().unwrap();
    assert_eq!(run(one.path(), config, &["--workers", "1", "reconstruct"]).status.code(), Some(0));
    assert_eq!(run(four.path(), config, &["--workers", "4", "reconstruct"]).status.code(), Some(0));
    for name in ["hull.json", "hull.csv", "sweep_000.csv", "sweep_005.csv"] {
        assert_eq!(read(one.path(), name), read(four.path(), name), "{name}");
    }
}

#[test]
fn monotonicity_smoke_case_comes_first() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), r#"{"cases": 3, "exponents": [1.5, 3], "mesh_h": 0.1}"#, &["--seed", "7", "monotonicity"]);
    assert_eq!(out.status.code(), Some(0));
    let jsonl = read(dir.path(), "monotonicity.jsonl");
    let records: Vec<serde_json::Value> = jsonl.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 7);
    let first = &records[0];
    for key in ["lower", "middle", "upper"] {
        assert!(first[key].as_f64().unwrap().abs() < 1e-12, "{key}: {first}");
    }
    assert!(records.iter().all(|r| r["verdict"] == "pass"));
}

#[test]
fn forward_writes_solution() {
    let dir = TempDir::new().unwrap();
    let out = run(dir.path(), r#"{"p": 3, "tau": 2, "mesh_h": 0.1}"#, &["forward"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = read(dir.path(), "forward_solution.csv");
    assert_eq!(csv.lines().next(), Some("x,y,value"));
    let report: serde_json::Value = serde_json::from_str(&read(dir.path(), "forward_report.json")).unwrap();
    assert_eq!(csv.lines().count() - 1, report["vertices"].as_u64().unwrap() as usize);
    assert!(report["pairing"].as_f64().unwrap() > 0.0);
}
