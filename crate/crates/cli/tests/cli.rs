//! End-to-end checks of the `crashrepair` binary: subcommand behavior
//! and the 0/1/2 exit-code contract.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn crashrepair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crashrepair"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn minimize_memleak_worked_example() {
    let out = crashrepair(&[
        "minimize",
        "--trace",
        fixtures().join("memleak/trace.txt").to_str().unwrap(),
        "--report",
        fixtures().join("memleak/report.json").to_str().unwrap(),
        "--candidate-file",
        "drivers/media/dvb-core/dvbdev.c",
        "--pid",
        "3062",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let data_lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data_lines.len(), 7);
    assert!(data_lines.last().unwrap().ends_with("dvb_media_device_free"));
}

#[test]
fn minimize_no_anchor_is_task_failure() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("t.trace"), "1 a.c f\n").unwrap();
    fs::write(
        dir.path().join("r.json"),
        r#"{"bug_type":"x","frames":[{"func":"zz","file":"a.c"}],"raw_text":""}"#,
    )
    .unwrap();
    let out = crashrepair(&[
        "minimize",
        "--trace",
        dir.path().join("t.trace").to_str().unwrap(),
        "--report",
        dir.path().join("r.json").to_str().unwrap(),
        "--candidate-file",
        "a.c",
        "--pid",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("stack-trace frame"));
}

#[test]
fn minimize_missing_trace_is_usage_error() {
    let out = crashrepair(&[
        "minimize",
        "--trace",
        "/nonexistent/t.trace",
        "--report",
        "/nonexistent/r.json",
        "--candidate-file",
        "a.c",
        "--pid",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn minimize_budget_on_synthetic_input() {
    let dir = tempfile::tempdir().unwrap();
    let mut trace = String::new();
    for i in 0..1000 {
        trace.push_str(&format!("1 a.c fn{}\n", i % 17));
    }
    fs::write(dir.path().join("t.trace"), trace).unwrap();
    fs::write(
        dir.path().join("r.json"),
        r#"{"bug_type":"x","frames":[{"func":"fn3","file":"a.c"}],"raw_text":""}"#,
    )
    .unwrap();
    let out = crashrepair(&[
        "minimize",
        "--trace",
        dir.path().join("t.trace").to_str().unwrap(),
        "--report",
        dir.path().join("r.json").to_str().unwrap(),
        "--candidate-file",
        "a.c",
        "--pid",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let records = stdout(&out).lines().filter(|l| !l.starts_with('#')).count();
    assert!(records <= 200, "{records} records exceed the budget");
}

#[test]
fn cis_manifest_totals() {
    let out = crashrepair(&[
        "cis",
        "--manifest",
        fixtures().join("cis/manifest.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["total"], serde_json::json!(1));
    assert_eq!(report["per_bug"][0]["score"], serde_json::json!(1));
    assert_eq!(report["per_bug"][1]["score"], serde_json::json!(0));
}

#[test]
fn cis_empty_manifest_total_zero() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("m.json"), r#"{"bugs": []}"#).unwrap();
    let out = crashrepair(&[
        "cis",
        "--manifest",
        dir.path().join("m.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["total"], serde_json::json!(0));
}

#[test]
fn cis_stage_totals_non_decreasing() {
    let manifest = fixtures().join("cis/manifest.json");
    let mut previous = None;
    for stage in [
        "stack-matched",
        "anchored",
        "anchored-backward",
        "anchored-forward",
        "full-pid",
    ] {
        let out = crashrepair(&[
            "cis",
            "--manifest",
            manifest.to_str().unwrap(),
            "--stage",
            stage,
        ]);
        assert_eq!(out.status.code(), Some(0));
        let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
        let total = report["total"].as_u64().unwrap();
        if let Some(prev) = previous {
            assert!(prev <= total, "{stage} dropped below {prev}");
        }
        previous = Some(total);
    }
}

#[test]
fn apply_sample_answer_prints_two_hunks() {
    let ws = tempfile::tempdir().unwrap();
    crashrepair_core::fsutil::copy_dir(&fixtures().join("calc_sum/dir_X"), &ws.path().join("dir_X"))
        .unwrap();
    let out = crashrepair(&[
        "apply",
        "--workspace",
        ws.path().to_str().unwrap(),
        "--patch",
        fixtures().join("calc_sum/sample_answer.txt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let diff = stdout(&out);
    assert_eq!(diff.lines().filter(|l| l.starts_with("@@")).count(), 2);
}

#[test]
fn apply_identity_patch_prints_empty_diff() {
    let ws = tempfile::tempdir().unwrap();
    fs::write(ws.path().join("a.c"), "int keep = 1;\n").unwrap();
    let patch = "// Modification 1\n<reason>\nnone\n</reason>\n<file>\na.c\n</file>\n<original>\nint keep = 1;\n</original>\n<patched>\nint keep = 1;\n</patched>\n";
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("p.txt"), patch).unwrap();
    let out = crashrepair(&[
        "apply",
        "--workspace",
        ws.path().to_str().unwrap(),
        "--patch",
        dir.path().join("p.txt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "");
}

#[test]
fn apply_ambiguous_original_is_task_failure() {
    let ws = tempfile::tempdir().unwrap();
    fs::write(ws.path().join("a.c"), "dup\nx\ndup\n").unwrap();
    let patch = "// Modification 1\n<reason>\nr\n</reason>\n<file>\na.c\n</file>\n<original>\ndup\n</original>\n<patched>\nonce\n</patched>\n";
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("p.txt"), patch).unwrap();
    let out = crashrepair(&[
        "apply",
        "--workspace",
        ws.path().to_str().unwrap(),
        "--patch",
        dir.path().join("p.txt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("occurs 2 times"));
    // All-or-nothing: the workspace is untouched.
    assert_eq!(fs::read_to_string(ws.path().join("a.c")).unwrap(), "dup\nx\ndup\n");
}

#[test]
fn check_compile_ground_truth_passes() {
    let out = crashrepair(&[
        "check-compile",
        "--bundle",
        fixtures().join("bundles/null-deref/bundle.json").to_str().unwrap(),
        "--patch",
        fixtures().join("bundles/null-deref/ground_truth.txt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("items.c: pass"));
}

#[test]
fn check_compile_typo_fails_listing_file() {
    let dir = tempfile::tempdir().unwrap();
    let patch = "// Modification 1\n<reason>\nr\n</reason>\n<file>\nitems.c\n</file>\n<original>\nstatic int pool_used = 0;\n</original>\n<patched>\nstatic int pool_used = 0 retrn;\n</patched>\n";
    fs::write(dir.path().join("p.txt"), patch).unwrap();
    let out = crashrepair(&[
        "check-compile",
        "--bundle",
        fixtures().join("bundles/null-deref/bundle.json").to_str().unwrap(),
        "--patch",
        dir.path().join("p.txt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("items.c: fail"));
}

#[test]
fn run_campaign_via_config_file() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = crashrepair(&[
        "run",
        "--config",
        fixtures().join("run_config.json").to_str().unwrap(),
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("resolved"));
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(out_dir.path().join("forest_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["resolved"], serde_json::json!(true));
    assert_eq!(report["use_execution_trace"], serde_json::json!(true));
    assert!(report["trace_records"].as_u64().unwrap() > 0);
    assert!(out_dir.path().join("minimized_trace.txt").is_file());
}

#[test]
fn run_with_no_exec_trace_flag() {
    let out_dir = tempfile::tempdir().unwrap();
    let out = crashrepair(&[
        "run",
        "--config",
        fixtures().join("run_config.json").to_str().unwrap(),
        "--out",
        out_dir.path().to_str().unwrap(),
        "--no-exec-trace",
        "--trees",
        "1",
        "--depth",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(out_dir.path().join("forest_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["use_execution_trace"], serde_json::json!(false));
    assert_eq!(report["trace_records"], serde_json::Value::Null);
    assert_eq!(report["config"]["num_trees"], serde_json::json!(1));
}

#[test]
fn run_unresolved_campaign_exits_one() {
    let out_dir = tempfile::tempdir().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "bundle": fixtures().join("bundles/div-zero/bundle.json"),
        "out": out_dir.path(),
        "forest": {"num_trees": 1, "max_depth": 1, "branching": 1, "n_hyp": 1, "n_patch": 1, "hypothesis_retries": 0},
        "backend": {
            "kind": "scripted",
            "fixture": fixtures().join("bundles/div-zero/transcripts/never.json")
        },
        "use_execution_trace": false
    });
    fs::write(dir.path().join("cfg.json"), config.to_string()).unwrap();
    let out = crashrepair(&["run", "--config", dir.path().join("cfg.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("not resolved"));
}

#[test]
fn run_bad_bundle_path_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "bundle": "/nonexistent/bundle.json",
        "out": dir.path().join("out"),
        "backend": {"kind": "scripted", "fixture": "/nonexistent/fixture.json"},
    });
    fs::write(dir.path().join("cfg.json"), config.to_string()).unwrap();
    let out = crashrepair(&["run", "--config", dir.path().join("cfg.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_missing_config_is_usage_error() {
    let out = crashrepair(&["run", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_usage_error() {
    let out = crashrepair(&["minimize", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}
