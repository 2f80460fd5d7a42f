use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fact(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fact"))
        .current_dir(dir)
        .args(args)
        .env_remove("FACT_API_KEY")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = fact(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn records(path: &Path) -> Vec<Value> {
    let mut recs: Vec<Value> = fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: Value = serde_json::from_str(l).unwrap();
            v.as_object_mut().unwrap().remove("wall_ms");
            v
        })
        .collect();
    recs.sort_by_key(|v| (v["sample_id"].to_string(), v["n_iterations"].as_u64()));
    recs
}

#[test]
fn gen_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--samples", "5", "--seed", "3", "--out", "a.jsonl"]);
    ok(d, &["gen", "--samples", "5", "--seed", "3", "--out", "b.jsonl"]);
    ok(d, &["gen", "--samples", "5", "--seed", "4", "--out", "c.jsonl"]);
    let a = fs::read(d.join("a.jsonl")).unwrap();
    assert_eq!(a, fs::read(d.join("b.jsonl")).unwrap());
    assert_ne!(a, fs::read(d.join("c.jsonl")).unwrap());
    assert_eq!(a.iter().filter(|&&b| b == b'\n').count(), 5);
    let echo: Value = serde_json::from_str(&fs::read_to_string(d.join("a.jsonl.config.json")).unwrap()).unwrap();
    assert_eq!(echo["seed"], 3);
    assert_eq!(echo["samples"], 5);
}

#[test]
fn zero_samples_gives_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(dir.path(), &["gen", "--task", "N8@2K", "--samples", "0", "--out", "empty.jsonl"]);
    assert!(stdout.contains("wrote 0 instance(s)"));
    assert_eq!(fs::read_to_string(dir.path().join("empty.jsonl")).unwrap(), "");
}

#[test]
fn full_pipeline_writes_summary_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--samples", "10", "--out-dir", "out"]);
    assert!(d.join("out/K1V10Q1@4K.jsonl").exists());
    ok(d, &["run", "--out-dir", "out"]);
    let rec = d.join("out/records-K1V10Q1@4K-mock-m3-fact.jsonl");
    assert_eq!(records(&rec).len(), 50);
    let table = ok(d, &["score", "--records", rec.to_str().unwrap(), "--out", "summary.csv"]);
    assert!(table.contains("| K1V10Q1@4K | mock-m3 | fact | 3 | 0.9000 | 10 | 0 |"), "{table}");
    let csv = fs::read_to_string(d.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    assert!(d.join("summary.csv.config.json").exists());
    ok(d, &["report", "--summary", "summary.csv", "--out", "report"]);
    let md = fs::read_to_string(d.join("report.md")).unwrap();
    assert!(md.contains("## Configuration") && md.contains("\"samples\": 10"));
    let svg = fs::read_to_string(d.join("report.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
}

#[test]
fn resume_skips_finished_points_and_repairs_tail() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--samples", "4", "--out", "ds.jsonl"]);
    ok(d, &["run", "--dataset", "ds.jsonl", "--records", "r.jsonl", "--sweep", "1,2"]);
    let mut text = fs::read_to_string(d.join("r.jsonl")).unwrap();
    text.push_str("{\"sample_id\": \"trunc");
    fs::write(d.join("r.jsonl"), text).unwrap();
    let stdout = ok(d, &["run", "--dataset", "ds.jsonl", "--records", "r.jsonl", "--sweep", "1,2,3", "--resume"]);
    assert!(stdout.contains("wrote 4 record(s)") && stdout.contains("8 skipped"), "{stdout}");
    let recs = records(&d.join("r.jsonl"));
    assert_eq!(recs.len(), 12);

    ok(d, &["run", "--dataset", "ds.jsonl", "--records", "fresh.jsonl", "--sweep", "1,2,3"]);
    assert_eq!(recs, records(&d.join("fresh.jsonl")));
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen", "--samples", "12", "--task", "N16@4K", "--out", "ds.jsonl"]);
    let common = ["run", "--task", "N16@4K", "--dataset", "ds.jsonl", "--capacity", "5", "--hallucination-rate", "0.3"];
    ok(d, &[&common[..], &["--workers", "1", "--records", "w1.jsonl"]].concat());
    ok(d, &[&common[..], &["--workers", "4", "--records", "w4.jsonl"]].concat());
    let one = records(&d.join("w1.jsonl"));
    assert_eq!(one.len(), 60);
    assert_eq!(one, records(&d.join("w4.jsonl")));
}

#[test]
fn invalid_sweep_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen", "--samples", "1", "--out", "ds.jsonl"]);
    let out = fact(dir.path(), &["run", "--dataset", "ds.jsonl", "--sweep", "3,1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("strictly increasing"));
}

#[test]
fn http_run_needs_live_flag() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen", "--samples", "1", "--out", "ds.jsonl"]);
    let out = fact(
        dir.path(),
        &["run", "--dataset", "ds.jsonl", "--model", "some-model", "--base-url", "http://127.0.0.1:9"],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--live"));
}

#[test]
fn malformed_records_report_line_number() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.jsonl"), "\n{not json}\n").unwrap();
    let out = fact(dir.path(), &["score", "--records", "bad.jsonl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.jsonl:2:"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg =
        r#"{"task": {"kind": "counting_stars", "n_stars": 8, "context_tokens": 2048}, "samples": 2, "sweep": [1, 2]}"#;
    fs::write(dir.path().join("exp.json"), cfg).unwrap();
    let printed = ok(dir.path(), &["config", "--config", "exp.json", "--sweep", "1,4", "--capacity", "2"]);
    let v: Value = serde_json::from_str(&printed).unwrap();
    assert_eq!(v["samples"], 2);
    assert_eq!(v["sweep"], serde_json::json!([1, 4]));
    assert_eq!(v["task"]["kind"], "counting_stars");
    assert_eq!(v["retriever"]["mock_params"]["capacity_m"], 2);
}
