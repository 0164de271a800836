//! End-to-end runs of the `leakward` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn corpus(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/corpus").join(name)
}

fn leakward(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leakward")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn check_reports_the_constructor_then_the_client() {
    let fig1 = corpus("fig1_mywriter.mj");
    let plain = stdout_json(&leakward(&["check", "--json", path(&fig1)]));
    assert_eq!(plain[0]["line"], 5);
    assert_eq!(plain[0]["resourceClass"], "PrintWriter");
    let inferred = stdout_json(&leakward(&["check", "--json", "--infer", path(&fig1)]));
    assert_eq!(inferred.as_array().unwrap().len(), 1);
    assert_eq!(inferred[0]["line"], 13);
    let human = leakward(&["check", path(&fig1)]);
    assert!(String::from_utf8_lossy(&human.stdout).contains("fig1_mywriter.mj:5: [UnsatisfiedObligation]"));
}

#[test]
fn inferred_specs_feed_back_into_check() {
    let dir = tempfile::tempdir().unwrap();
    let specs = dir.path().join("specs.json");
    let fig1 = corpus("fig1_mywriter.mj");
    assert!(leakward(&["infer", path(&fig1), "-o", path(&specs)]).status.success());
    let j: Value = serde_json::from_str(&fs::read_to_string(&specs).unwrap()).unwrap();
    assert_eq!(j["fields"]["MyWriter.pw"], "owning");
    let w = stdout_json(&leakward(&["check", "--json", "--specs", path(&specs), path(&fig1)]));
    assert_eq!(w[0]["line"], 13);
}

#[test]
fn transform_and_fix_write_their_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let fig2 = corpus("fig2_tempfilewriter.mj");
    let out = leakward(&["transform", path(&fig2), "-o", path(&dir.path().join("x"))]);
    assert!(out.status.success());
    let transformed = fs::read_to_string(dir.path().join("x/fig2_tempfilewriter.mj")).unwrap();
    assert!(transformed.contains("implements AutoCloseable"));
    assert!(dir.path().join("x/fig2_tempfilewriter.mj.edits.json").exists());

    let pre = corpus("preclose_socket.mj");
    let out = leakward(&["fix", path(&pre), "-o", path(&dir.path().join("f"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let patch = fs::read_to_string(dir.path().join("f/preclose_socket.mj.patch")).unwrap();
    assert!(patch.contains("+    if (socket != null) {"));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("f/fixreport.json")).unwrap()).unwrap();
    let templates: Vec<&str> = report.as_array().unwrap().iter().filter_map(|e| e["template"].as_str()).collect();
    assert_eq!(templates, ["PreCloseInsertion", "TryFinallyWrap"]);
}

#[test]
fn run_and_explain_escape() {
    let j = stdout_json(&leakward(&["run", "--trace", path(&corpus("preclose_socket.mj"))]));
    assert_eq!(j["leaked"], serde_json::json!([0]));
    assert_eq!(j["status"], "completed");
    assert!(j["trace"].is_array());
    let e = stdout_json(&leakward(&["explain-escape", path(&corpus("unfixable_return_escape.mj")), "--site", "0"]));
    assert_eq!(e["routes"], serde_json::json!(["returned"]));
    let missing = leakward(&["explain-escape", path(&corpus("unfixable_return_escape.mj")), "--site", "99"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn pipeline_writes_the_report_and_sets_the_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    fs::create_dir(&src).unwrap();
    fs::copy(corpus("fig2_tempfilewriter.mj"), src.join("fig2_tempfilewriter.mj")).unwrap();
    let out_dir = dir.path().join("out");
    let out = leakward(&["pipeline", path(&src), "-o", path(&out_dir), "--propagate", "fig2_tempfilewriter.mj"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["report.json", "metrics.json", "summary.txt", "patched/fig2_tempfilewriter.mj", "patches/fig2_tempfilewriter.mj.patch"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let metrics: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["rate"], "100%");
    let patched = fs::read_to_string(out_dir.join("patched/fig2_tempfilewriter.mj")).unwrap();
    assert!(patched.contains("    if (stream != null) {\n      stream.close();\n    }"));

    fs::copy(corpus("unfixable_return_escape.mj"), src.join("unfixable_return_escape.mj")).unwrap();
    let out = leakward(&["pipeline", path(&src), "-o", path(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("Unfixable(EscapesReturn)"));
}

#[test]
fn bad_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mj");
    fs::write(&bad, "class {").unwrap();
    let out = leakward(&["check", path(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("leakward: "));
}
