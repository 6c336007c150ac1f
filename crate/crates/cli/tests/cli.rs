//! End-to-end runs of the binary on small settings.

use std::path::Path;
use std::process::{Command, Output};

fn catqaoa(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catqaoa"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("RUST_LOG", "info")
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn appendix_c_is_reproducible_and_hashed() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["--dim", "12", "appendix-c", "--grid", "12", "--p-max", "2"];
    let first = catqaoa(dir.path(), &args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let base = dir.path().join("appendix_c");
    let report = json(&base.join("report.json"));
    let manifest = json(&base.join("manifest.json"));
    assert_eq!(report["config_hash"], manifest["config_hash"]);
    assert_eq!(report["checks"].as_array().unwrap().len(), 3);
    let csv = std::fs::read_to_string(base.join("landscape_cat_prep.csv")).unwrap();
    let hash = manifest["config_hash"].as_str().unwrap();
    assert!(csv.starts_with(&format!("# config_hash: {hash}")));

    let second = catqaoa(dir.path(), &args);
    assert!(second.status.success());
    assert_eq!(json(&base.join("report.json")), report);

    let other = catqaoa(dir.path(), &["--dim", "12", "appendix-c", "--grid", "13", "--p-max", "1"]);
    assert!(other.status.success());
    assert_ne!(json(&base.join("manifest.json"))["config_hash"], manifest["config_hash"]);
}

#[test]
fn maxcut_run_reuses_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["qaoa", "--instances", "2", "--vertices", "4", "--p-max", "2", "--grid", "10", "--backend", "ideal"];
    let first = catqaoa(dir.path(), &args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let base = dir.path().join("qaoa");
    assert!(base.join("instances/instance_000.json").exists());
    let summary = std::fs::read_to_string(base.join("summary.csv")).unwrap();
    // Header comment, column names, two instances at two depths.
    assert_eq!(summary.lines().count(), 2 + 4);

    let second = catqaoa(dir.path(), &args);
    assert!(second.status.success());
    assert!(String::from_utf8_lossy(&second.stderr).contains("reusing checkpoint"));
    assert_eq!(std::fs::read_to_string(base.join("summary.csv")).unwrap(), summary);
}

#[test]
fn noisy_backend_without_library_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = catqaoa(dir.path(), &["qaoa", "--instances", "1", "--vertices", "3", "--backend", "cat"]);
    assert!(!out.status.success());
    assert!(!dir.path().join("qaoa/manifest.json").exists());
}

#[test]
fn invalid_depth_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = catqaoa(dir.path(), &["appendix-c", "--grid", "4", "--p-max", "3"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--p-max"));
}
