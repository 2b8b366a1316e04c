//! End-to-end CLI behavior: exit codes, replayed check runs, overrides,
//! sweeps, and cache management.

use std::path::PathBuf;
use std::process::{Command, Output};

fn passfc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_passfc"))
        .args(args)
        .output()
        .expect("spawn passfc")
}

fn reactors_cache() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../passfc/tests/fixtures/reactors_trace/cache")
}

fn averitec_fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/averitec10")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn check_replays_the_reactor_trace() {
    let out = tempfile::tempdir().unwrap();
    let output = passfc(&[
        "--cache",
        "replay",
        "--cache-dir",
        reactors_cache().to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "check",
        "--claim",
        "The United States has 94 operating reactors",
        "--date",
        "2023-07-26",
    ]);
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let text = stdout(&output);
    assert!(text.contains("CONTRADICTED"), "stdout: {text}");
    assert!(text.contains("The United States has 93 operating reactors."));
    assert!(text.contains("eia.gov"));
    let trace = out.path().join("traces/c1.jsonl");
    assert!(trace.is_file());
    let trace_text = std::fs::read_to_string(trace).unwrap();
    assert!(trace_text.contains("contextual_grounding"));
}

#[test]
fn check_empty_claim_is_usage_error() {
    let output = passfc(&["check", "--claim", "   "]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn check_without_claim_or_response_is_usage_error() {
    let output = passfc(&["check"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn replay_without_cache_dir_is_config_error() {
    let output = passfc(&["--cache", "replay", "check", "--claim", "x"]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("cache"));
}

#[test]
fn replay_with_missing_dir_is_config_error() {
    let output = passfc(&[
        "--cache",
        "replay",
        "--cache-dir",
        "/nonexistent/cache",
        "check",
        "--claim",
        "x",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn replay_cache_miss_is_transport_error() {
    // Valid cache dir, but a claim that was never recorded.
    let out = tempfile::tempdir().unwrap();
    let output = passfc(&[
        "--cache",
        "replay",
        "--cache-dir",
        reactors_cache().to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "check",
        "--claim",
        "A claim that is not in the recorded cache",
        "--date",
        "2023-07-26",
    ]);
    assert_eq!(output.status.code(), Some(3));
}

#[test]
fn eval_override_caps_iterations() {
    let fixture = averitec_fixture();
    let out = tempfile::tempdir().unwrap();
    let output = passfc(&[
        "--cache",
        "replay",
        "--cache-dir",
        fixture.join("cache").to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "--override",
        "max_iterations=1",
        "eval",
        fixture.join("dataset.jsonl").to_str().unwrap(),
        "--format",
        "averitec_dev",
    ]);
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let csv = std::fs::read_to_string(out.path().join("results.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let rounds: usize = line.split(',').nth(4).unwrap().parse().unwrap();
        assert!(rounds <= 1, "row exceeds the iteration override: {line}");
    }
}

#[test]
fn eval_schema_error_lists_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\": \"x\"}\n").unwrap();
    let output = passfc(&["eval", bad.to_str().unwrap(), "--format", "custom"]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("line 1"));
}

#[test]
fn sweep_unknown_axis_is_usage_error() {
    let fixture = averitec_fixture();
    let output = passfc(&[
        "sweep",
        fixture.join("dataset.jsonl").to_str().unwrap(),
        "--format",
        "averitec_dev",
        "--axis",
        "nonsense",
        "--values",
        "1",
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn sweep_iterations_writes_ordered_table() {
    let fixture = averitec_fixture();
    let out = tempfile::tempdir().unwrap();
    let output = passfc(&[
        "--cache",
        "replay",
        "--cache-dir",
        fixture.join("cache").to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "sweep",
        fixture.join("dataset.jsonl").to_str().unwrap(),
        "--format",
        "averitec_dev",
        "--axis",
        "iterations",
        "--values",
        "1,2",
    ]);
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let csv = std::fs::read_to_string(out.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3, "header plus one row per value: {csv}");
    assert!(lines[0].starts_with("iterations,"));
    assert!(lines[1].starts_with("1,"));
    assert!(lines[2].starts_with("2,"));
}

#[test]
fn sweep_triggers_keeps_value_order() {
    let fixture = averitec_fixture();
    let out = tempfile::tempdir().unwrap();
    let output = passfc(&[
        "--cache",
        "replay",
        "--cache-dir",
        fixture.join("cache").to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
        "sweep",
        fixture.join("dataset.jsonl").to_str().unwrap(),
        "--format",
        "averitec_dev",
        "--axis",
        "triggers",
        "--values",
        "contradicted",
        "--values",
        "contradicted,inconclusive",
    ]);
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let csv = std::fs::read_to_string(out.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("contradicted,"));
    assert!(lines[2].starts_with("\"contradicted,inconclusive\","));
}

#[test]
fn cache_stats_and_guarded_clear() {
    // Work on a copy so the committed fixture stays intact.
    let tmp = tempfile::tempdir().unwrap();
    let copy = tmp.path().join("cache");
    copy_tree(&reactors_cache(), &copy);

    let output = passfc(&["--cache-dir", copy.to_str().unwrap(), "cache", "stats"]);
    assert!(output.status.success());
    let text = stdout(&output);
    assert!(text.contains("llm entries: 4"), "stdout: {text}");
    assert!(text.contains("search entries: 2"), "stdout: {text}");

    // Clearing without --yes refuses.
    let refused = passfc(&["--cache-dir", copy.to_str().unwrap(), "cache", "clear"]);
    assert_eq!(refused.status.code(), Some(2));

    let cleared = passfc(&["--cache-dir", copy.to_str().unwrap(), "cache", "clear", "--yes"]);
    assert!(cleared.status.success());
    let output = passfc(&["--cache-dir", copy.to_str().unwrap(), "cache", "stats"]);
    assert!(stdout(&output).contains("llm entries: 0"));
}

fn copy_tree(src: &std::path::Path, dst: &std::path::Path) {
    std::fs::create_dir_all(dst).unwrap();
    for entry in std::fs::read_dir(src).unwrap() {
        let entry = entry.unwrap();
        let target = dst.join(entry.file_name());
        if entry.path().is_dir() {
            copy_tree(&entry.path(), &target);
        } else {
            std::fs::copy(entry.path(), &target).unwrap();
        }
    }
}
