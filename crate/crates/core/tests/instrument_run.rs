//! Builds and runs instrumented toy programs to check the trace
//! contract end to end: every function entry appends one canonical
//! line, in execution order.

use std::fs;
use std::path::Path;
use std::process::Command;

use crashrepair_core::instrument::{instrument_c_sources, InstrumentError};
use crashrepair_core::trace::parse_trace;

fn compile_and_run(root: &Path) -> i32 {
    let sources: Vec<String> = crashrepair_core::fsutil::c_sources(root).unwrap();
    let status = Command::new("cc")
        .args(&sources)
        .arg("-o")
        .arg("prog")
        .current_dir(root)
        .status()
        .expect("cc available");
    assert!(status.success(), "instrumented program must compile");
    let status = Command::new("./prog")
        .current_dir(root)
        .status()
        .expect("program runs");
    status.code().unwrap_or(-1)
}

#[test]
fn instrumented_run_logs_f_g_f() {
    let ws = tempfile::tempdir().unwrap();
    fs::write(
        ws.path().join("funcs.c"),
        "#include \"funcs.h\"\n\nint g(int x) {\n    return x + 1;\n}\n\nint f(int x) {\n    if (x == 0)\n        return g(x) + f(1);\n    return x;\n}\n",
    )
    .unwrap();
    fs::write(ws.path().join("funcs.h"), "int f(int x);\nint g(int x);\n").unwrap();
    fs::write(
        ws.path().join("main.c"),
        "#include \"funcs.h\"\nint main(void) {\n    return f(0) == 2 ? 0 : 1;\n}\n",
    )
    .unwrap();

    let out = tempfile::tempdir().unwrap();
    let log = out.path().join("trace.log");
    let dest = out.path().join("ws");
    let instrumented =
        instrument_c_sources(ws.path(), &["funcs.c".into()], &log, &dest).unwrap();
    assert_eq!(
        instrumented
            .functions
            .iter()
            .map(|(_, f)| f.as_str())
            .collect::<Vec<_>>(),
        vec!["g", "f"]
    );

    // main.c is not a candidate, so main() must not log.
    assert_eq!(compile_and_run(&dest), 0);
    let trace = parse_trace(&fs::read_to_string(&log).unwrap()).unwrap();
    let funcs: Vec<&str> = trace.records.iter().map(|r| r.func.as_str()).collect();
    assert_eq!(funcs, vec!["f", "g", "f"]);
    // One pid throughout, file column is the candidate path.
    assert!(trace.records.iter().all(|r| r.pid == trace.records[0].pid));
    assert!(trace.records.iter().all(|r| r.file == "funcs.c"));
}

#[test]
fn logged_funcs_are_defined_in_candidates() {
    let ws = tempfile::tempdir().unwrap();
    fs::write(
        ws.path().join("a.c"),
        "void step_two(void) {}\nvoid step_one(void) {\n    step_two();\n}\nint main(void) {\n    step_one();\n    step_one();\n    return 0;\n}\n",
    )
    .unwrap();
    let out = tempfile::tempdir().unwrap();
    let log = out.path().join("t.log");
    let dest = out.path().join("ws");
    let instrumented = instrument_c_sources(ws.path(), &["a.c".into()], &log, &dest).unwrap();

    assert_eq!(compile_and_run(&dest), 0);
    let trace = parse_trace(&fs::read_to_string(&log).unwrap()).unwrap();
    assert!(!trace.records.is_empty());
    for record in &trace.records {
        assert!(
            instrumented
                .functions
                .iter()
                .any(|(file, func)| *file == record.file && *func == record.func),
            "logged {} {} is not an instrumented function",
            record.file,
            record.func
        );
    }
}

#[test]
fn candidate_missing_reported() {
    let ws = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let err = instrument_c_sources(
        ws.path(),
        &["nope.c".into()],
        &out.path().join("t.log"),
        &out.path().join("ws"),
    )
    .unwrap_err();
    assert!(matches!(err, InstrumentError::CandidateMissing(_)));
}

#[test]
fn nested_candidate_includes_header_relatively() {
    let ws = tempfile::tempdir().unwrap();
    fs::create_dir_all(ws.path().join("src/core")).unwrap();
    fs::write(
        ws.path().join("src/core/deep.c"),
        "int deep(void) {\n    return 7;\n}\nint main(void) {\n    return deep() == 7 ? 0 : 1;\n}\n",
    )
    .unwrap();
    let out = tempfile::tempdir().unwrap();
    let log = out.path().join("t.log");
    let dest = out.path().join("ws");
    instrument_c_sources(ws.path(), &["src/core/deep.c".into()], &log, &dest).unwrap();
    let text = fs::read_to_string(dest.join("src/core/deep.c")).unwrap();
    assert!(text.starts_with("#include \"../../__trace_probe.h\"\n"));
    assert_eq!(compile_and_run(&dest), 0);
    let trace = parse_trace(&fs::read_to_string(&log).unwrap()).unwrap();
    assert_eq!(trace.records.len(), 2); // deep + main, both in the candidate
}
