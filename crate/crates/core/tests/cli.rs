mod common;

use std::path::Path;

use common::run_cli;

#[test]
fn reruns_are_byte_identical() {
    common::check_cli_determinism().unwrap();
}

fn synth(dir: &Path, days: &str) {
    let out = run_cli(dir, &["synth", "--days", days, "--out-dir", "syn"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_input_exits_with_usage_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_cli(tmp.path(), &["ingest", "--prices", "nope.csv", "--headlines", "nope.jsonl", "--out-dir", "o"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));
    let out = run_cli(tmp.path(), &["train", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn weekend_future_price_is_an_invariant_failure() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "40");
    std::fs::write(tmp.path().join("weekend.csv"), "date,price\n2015-01-05,20\n2015-01-10,21\n").unwrap();
    let out = run_cli(
        tmp.path(),
        &["ingest", "--prices", "weekend.csv", "--headlines", "syn/headlines.jsonl", "--out-dir", "o"],
    );
    assert_eq!(out.status.code(), Some(1));
    // The spot market trades on weekends.
    let out = run_cli(
        tmp.path(),
        &["ingest", "--market", "spot", "--prices", "weekend.csv", "--headlines", "syn/headlines.jsonl", "--split", "0.5", "--out-dir", "o"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn rerun_refuses_changed_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "40");
    let args = ["ingest", "--prices", "syn/prices.csv", "--headlines", "syn/headlines.jsonl", "--out-dir", "o"];
    assert!(run_cli(tmp.path(), &args).status.success());
    let manifest = tmp.path().join("o/manifest.ingest.json");
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(&manifest).unwrap()).unwrap();
    assert_eq!(m["command"], "ingest");
    assert_eq!(m["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(m["config"]["corpus"]["split"], 0.6);

    let prices = tmp.path().join("syn/prices.csv");
    let mut text = std::fs::read_to_string(&prices).unwrap();
    text.push_str("2030-01-07,1.0\n");
    std::fs::write(&prices, text).unwrap();
    let out = run_cli(tmp.path(), &["rerun", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("syn/prices.csv"));
}

#[test]
fn cache_location_follows_environment() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "40");
    let cache = tmp.path().join("shared-cache");
    let args = ["ingest", "--prices", "syn/prices.csv", "--headlines", "syn/headlines.jsonl", "--out-dir", "o"];
    let out = std::process::Command::new(common::gasflow_bin())
        .current_dir(tmp.path())
        .env("GASFLOW_CACHE", &cache)
        .args(args)
        .output()
        .unwrap();
    assert!(out.status.success());
    let entries: Vec<_> = std::fs::read_dir(&cache)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("corpus-"))
        .collect();
    assert_eq!(entries.len(), 1);
    assert!(!tmp.path().join("o/.cache").exists());
    // A second run reads the cache and writes the same corpus.
    let first = std::fs::read(tmp.path().join("o/corpus.json")).unwrap();
    let out = std::process::Command::new(common::gasflow_bin())
        .current_dir(tmp.path())
        .env("GASFLOW_CACHE", &cache)
        .args(args)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(std::fs::read(tmp.path().join("o/corpus.json")).unwrap(), first);
}

#[test]
fn extract_writes_coverage_for_both_modes() {
    let tmp = tempfile::tempdir().unwrap();
    let fx = common::fixtures();
    let out = run_cli(
        tmp.path(),
        &[
            "extract",
            "--conllu",
            fx.join("coverage20.conllu").to_str().unwrap(),
            "--wordnet-dir",
            fx.join("wordnet").to_str().unwrap(),
            "--mode",
            "verb-only",
            "--out-dir",
            "x",
        ],
    );
    assert!(out.status.success());
    let cov = std::fs::read_to_string(tmp.path().join("x/coverage.csv")).unwrap();
    assert_eq!(
        cov,
        "mode,headlines_total,headlines_with_events,fraction\nfull,20,12,0.600000\nverb-only,20,3,0.150000\n"
    );
    let events = std::fs::read_to_string(tmp.path().join("x/events.jsonl")).unwrap();
    assert_eq!(events.lines().count(), 3);

    std::fs::write(tmp.path().join("empty.conllu"), "").unwrap();
    let out = run_cli(
        tmp.path(),
        &["extract", "--conllu", "empty.conllu", "--wordnet-dir", fx.join("wordnet").to_str().unwrap(), "--out-dir", "y"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn baseline_backtest_and_report_tables() {
    let tmp = tempfile::tempdir().unwrap();
    synth(tmp.path(), "80");
    let out = run_cli(
        tmp.path(),
        &["backtest", "--predictor", "linear-ar", "--prices", "syn/prices.csv", "--headlines", "syn/headlines.jsonl", "--out-dir", "b"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(tmp.path().join("b/report.txt")).unwrap();
    assert!(report.contains("[linear-ar]") && report.contains("[baseline]"));
    let base = std::fs::read_to_string(tmp.path().join("b/baseline_ledger.csv")).unwrap();
    // 80 days with a 0.6 split leave 32 test days, all bought equally.
    assert_eq!(base.lines().count(), 33);
    let out = run_cli(tmp.path(), &["backtest", "--prices", "syn/prices.csv", "--headlines", "syn/headlines.jsonl", "--out-dir", "c"]);
    assert_eq!(out.status.code(), Some(2), "c3d without a checkpoint");
}
