use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/corpus")
}

fn core_fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(rel)
}

fn goalforge(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_goalforge"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("GOALFORGE_STORE")
        .args(["--store", "store.db", "--dataset", "preliminary"])
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

#[test]
fn stage_by_stage_matches_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = corpus();
    let fx = fixtures.to_str().unwrap();
    let report = json(&goalforge(dir.path(), &["ingest", "--fixtures", fx]));
    assert_eq!(report["stages"][0]["counts"]["usable"], 51);
    for stage in ["annotate", "index", "simulate", "extract", "synthesize", "analyze"] {
        json(&goalforge(dir.path(), &[stage]));
    }
    let selected = json(&goalforge(dir.path(), &["select", "--goal", "6", "--cap", "3"]));
    assert_eq!(selected["participants"].as_array().unwrap().len(), 3);
    json(&goalforge(dir.path(), &["export-site", "--out", "site"]));

    let other = tempfile::tempdir().unwrap();
    let report = json(&goalforge(other.path(), &["run", "--fixtures", fx, "--out", "site"]));
    assert_eq!(report["stages"].as_array().unwrap().len(), 8);
    let manifest = |d: &Path| std::fs::read(d.join("site/manifest.json")).unwrap();
    assert_eq!(manifest(dir.path()), manifest(other.path()));

    let stats = json(&goalforge(dir.path(), &["stats"]));
    assert_eq!(stats["counts"]["graphs"], 17);
    assert_eq!(stats["metrics"].as_array().unwrap().len(), 17);
}

#[test]
fn missing_prerequisite_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = goalforge(dir.path(), &["simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot run simulate"));
}

#[test]
fn stats_from_fixture_files() {
    let dir = tempfile::tempdir().unwrap();
    let tags = core_fixture("tags/formal.jsonl");
    let formal = core_fixture("graphs/formal.json");
    let pre = core_fixture("graphs/preliminary.json");
    let out = json(&goalforge(
        dir.path(),
        &[
            "stats",
            "--tags",
            tags.to_str().unwrap(),
            "--graphs",
            formal.to_str().unwrap(),
            pre.to_str().unwrap(),
        ],
    ));
    assert_eq!(out["tag_stats"]["talks"], 1127);
    assert_eq!(out["argmax"], serde_json::json!([10, 10]));
    let p = out["comparison"][0]["welch_p"].as_f64().unwrap();
    assert!((p - 0.415).abs() < 0.001);
}

#[test]
fn custom_dataset_needs_a_window() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = corpus();
    let out = Command::new(env!("CARGO_BIN_EXE_goalforge"))
        .current_dir(dir.path())
        .args(["--store", "s.db", "--dataset", "pilot", "ingest", "--fixtures", fixtures.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_goalforge"))
        .current_dir(dir.path())
        .env("RUST_LOG", "warn")
        .args(["--store", "s.db", "--dataset", "pilot", "ingest", "--window", "2022-01-01..2022-12-31"])
        .args(["--fixtures", fixtures.to_str().unwrap()])
        .output()
        .unwrap();
    let report = json(&out);
    assert_eq!(report["stages"][0]["counts"]["collected"], 17);
}
