use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> String {
    root().join("configs").join(name).display().to_string()
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_iterfield"));
    c.env_remove("ITERFIELD_SEED").env_remove("SOURCE_DATE_EPOCH");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

const LINEAR: &[&str] = &["check", "--linear", "[[1,2],[1,-1]]", "--k", "1..=4"];

#[test]
fn golden_linear_report() {
    let out = run(LINEAR);
    assert_eq!(out.status.code(), Some(0));
    let golden = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/check_linear.json")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), golden);
}

#[test]
fn linear_pattern_and_manifest_hash() {
    let r = json(&run(LINEAR));
    let pattern: Vec<&str> = r["pattern"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(pattern, ["no", "yes", "no", "yes"]);
    let canonical = iterfield_cli::output::canonical_json(&r["config"]);
    let digest: String = Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(r["manifest"]["config_hash"], Value::String(digest));
    assert_eq!(r["manifest"]["timestamps"]["started"], Value::Null);
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["check", "--rotation", "2", "--k", "1,2", "--expect", "NY"]).status.code(), Some(0));
    assert_eq!(run(&["check", "--rotation", "2", "--k", "1,2", "--expect", "YY"]).status.code(), Some(1));
    assert_eq!(run(&["check", "--rotation", "3", "--k", "1", "--assert-conservative"]).status.code(), Some(1));
    assert_eq!(run(&["fedavg", "--config", "/nonexistent/config.json"]).status.code(), Some(2));
    assert_eq!(run(&["check", "--k", "1"]).status.code(), Some(2));
    assert_eq!(run(&["paper-suite", "no-such-entry"]).status.code(), Some(2));
    assert_eq!(run(&["paper-suite", "full"]).status.code(), Some(2));
    assert_eq!(run(&["bogus"]).status.code(), Some(2));
}

#[test]
fn malformed_config_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{\n  \"schema_version\": 1,\n  \"field\": {\n}").unwrap();
    let out = run(&["scan", "--field", p.to_str().unwrap(), "--k-max", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}

#[test]
fn empty_k_range_is_valid() {
    let out = run(&["check", "--rotation", "3", "--k", "3..1"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    assert_eq!(r["report"]["results"], Value::Array(vec![]));
    assert!(r["manifest"].is_object());
}

#[test]
fn seed_from_environment() {
    let args = ["check", "--rotation", "3", "--k", "1", "--numeric-only"];
    let default = json(&run(&args));
    assert_eq!(default["manifest"]["seed"], 24301);
    let env = json(&bin().args(args).env("ITERFIELD_SEED", "77").output().unwrap());
    assert_eq!(env["manifest"]["seed"], 77);
    let flag = json(&bin().args(args).arg("--seed").arg("5").env("ITERFIELD_SEED", "77").output().unwrap());
    assert_eq!(flag["manifest"]["seed"], 5);
    assert_ne!(env["report"]["results"], default["report"]["results"]);
}

#[test]
fn source_date_epoch_sets_timestamps() {
    let out = bin().args(LINEAR).env("SOURCE_DATE_EPOCH", "1700000000").output().unwrap();
    let r = json(&out);
    assert_eq!(r["manifest"]["timestamps"]["started"], 1700000000u64);
}

#[test]
fn fedavg_writes_trace_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["fedavg", "--config", &config("fedavg_quadratic.json"), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["fedavg.json", "trace.csv"]);
    let csv = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("round,x0,x1,dist,ratio,fs"));
    assert_eq!(lines.count(), 31);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("fedavg.json")).unwrap()).unwrap();
    assert_eq!(report, json(&out));
    assert_eq!(report["rate"]["pass"], Value::Bool(true));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let cases: Vec<Vec<String>> = vec![
        vec!["glm-verify".into(), "--spec".into(), config("glm_logistic.json"), "--k".into(), "2".into()],
        vec!["scan".into(), "--field".into(), config("field_cubic.json"), "--k-max".into(), "3".into()],
        vec!["fedavg".into(), "--config".into(), config("fedavg_logistic.json")],
    ];
    for args in cases {
        let a = bin().args(&args).output().unwrap();
        let b = bin().args(&args).output().unwrap();
        assert_eq!(a.status.code(), Some(0), "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn suite_list_and_full_index() {
    let list = run(&["paper-suite", "list"]);
    assert_eq!(list.status.code(), Some(0));
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["paper-suite", "full", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let index: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("index.json")).unwrap()).unwrap();
    let entries = index["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 14);
    for e in entries {
        let bytes = std::fs::read(dir.path().join(e["file"].as_str().unwrap())).unwrap();
        let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(e["sha256"].as_str().unwrap(), digest);
        assert_eq!(e["pass"], Value::Bool(true), "{}", e["id"]);
    }
    // no temporary files are left behind
    assert!(std::fs::read_dir(dir.path())
        .unwrap()
        .all(|e| !e.unwrap().file_name().to_string_lossy().starts_with('.')));
}
