//! The acceptance criteria, one test each.

mod common;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use leakward::checker::{check_program, filter_constructor_first_writes, reject_final_writes, WarningKind};
use leakward::escape::EscapeAnalysis;
use leakward::frontend::{default_library_spec, parse, pretty_print, LibrarySpec};
use leakward::fuzz;
use leakward::inference::{infer_specs, SpecSet};
use leakward::oracle::{run, uncovered, RuntimeReport, DEFAULT_STEP_LIMIT};
use leakward::pipeline::{compute_metrics, run_pipeline, Disposition, MetricsReport, PipelineReport};
use leakward::repair::pre_close_eligible;
use leakward::transforms::{field_to_local, finalize_fields};
use num_bigint::BigInt;
use num_rational::BigRational;

type Verdict = Result<(), String>;

const FUZZ_PROGRAMS: u64 = 250;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Verdict {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn pipeline(sources: &[(String, String)]) -> PipelineReport {
    run_pipeline(sources, &default_library_spec(), &common::corpus_config()).expect("corpus sources parse")
}

/// Renames every identifier that does not occur in `original` to a
/// positional placeholder, so fresh names compare equal.
fn canonical_names(text: &str, original: &str) -> String {
    let known: std::collections::BTreeSet<&str> = idents(original).collect();
    let mut fresh: BTreeMap<String, String> = BTreeMap::new();
    let mut out = String::new();
    let mut rest = text;
    while let Some(start) = rest.find(|c: char| c.is_ascii_alphabetic() || c == '_') {
        out.push_str(&rest[..start]);
        let len = rest[start..].find(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).unwrap_or(rest.len() - start);
        let word = &rest[start..start + len];
        if known.contains(word) || is_keyword(word) {
            out.push_str(word);
        } else {
            let n = fresh.len();
            out.push_str(fresh.entry(word.to_string()).or_insert_with(|| format!("_v{n}")));
        }
        rest = &rest[start + len..];
    }
    out.push_str(rest);
    out
}

fn idents(s: &str) -> impl Iterator<Item = &str> {
    s.split(|c: char| !(c.is_ascii_alphanumeric() || c == '_')).filter(|w| w.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_'))
}

fn is_keyword(w: &str) -> bool {
    matches!(
        w,
        "class"
            | "implements"
            | "public"
            | "private"
            | "static"
            | "final"
            | "void"
            | "if"
            | "else"
            | "try"
            | "catch"
            | "finally"
            | "null"
            | "new"
            | "return"
            | "this"
            | "while"
            | "throw"
            | "int"
            | "boolean"
            | "true"
            | "false"
            | "AutoCloseable"
            | "Exception"
    )
}

/// The wrapper program after finalizer injection, the pre-close and the
/// client-side try/finally.
const WRAPPER_FIXED: &str = "class TempFileWriter implements AutoCloseable {
  private PrintStream stream;

  public TempFileWriter(String path) {
      stream = new PrintStream(path);
  }

  void resetStream(String path) {
    if (stream != null) {
      stream.close();
    }
    stream = new PrintStream(path);
  }

  public void printSomething() {
    stream.println(\"hello\");
  }

  public void close() {
    stream.close();
  }
}

class Client {
  public static void print() {
    TempFileWriter tmp = null;
    try {
      tmp = new TempFileWriter(\"f.txt\");
      tmp.printSomething();
    } finally {
      if (tmp != null) {
        tmp.close();
      }
    }
  }

  static void main() {
    Client.print();
  }
}
";

const PRECLOSE_BLOCK: &str = "    if (socket != null) {
      try {
        socket.close();
      } catch (Exception e) {
        e.printStackTrace();
      }
    }
    socket = new Socket();
";

fn worked_examples() -> Verdict {
    let start = Instant::now();
    let names = [
        "fig1_mywriter.mj",
        "fig2_tempfilewriter.mj",
        "final_field_try_catch.mj",
        "containment_proxy.mj",
        "containment_getter.mj",
        "preclose_socket.mj",
        "case_parser_tables.mj",
        "case_actors.mj",
    ];
    let sources: Vec<(String, String)> = names.iter().map(|n| (n.to_string(), common::source(n))).collect();
    let report = pipeline(&sources);
    let file = |n: &str| report.files.iter().find(|f| f.file == n).expect("requested file is reported");
    let fig1 = file("fig1_mywriter.mj");
    let lines = |ws: &[leakward::checker::Warning]| ws.iter().map(|w| w.line).collect::<Vec<_>>();
    ensure(lines(&fig1.w_orig) == [5] && lines(&fig1.w_inferred) == [13], || {
        format!("wrapper warnings at {:?} then {:?}", lines(&fig1.w_orig), lines(&fig1.w_inferred))
    })?;
    let fig2 = file("fig2_tempfilewriter.mj");
    let expected = pretty_print(&parse("expected.mj", WRAPPER_FIXED).map_err(|e| e.to_string())?);
    let (a, b) = (canonical_names(&expected, &fig2.original_text), canonical_names(&fig2.final_text, &fig2.original_text));
    ensure(a == b, || format!("repaired wrapper program differs from the expected one:\n{}", fig2.final_text))?;
    let pre = file("preclose_socket.mj");
    ensure(pre.final_text.contains(PRECLOSE_BLOCK), || format!("pre-close block missing:\n{}", pre.final_text))?;
    let tables = file("case_parser_tables.mj");
    ensure(tables.final_text.contains("    if (f != null) {\n      f.close();\n    }\n    f = new BufferedWriter(new FileWriter(file));"), || {
        format!("parser-tables pre-close missing:\n{}", tables.final_text)
    })?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))
}

fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn reference_rows() -> Verdict {
    let rows = [((1446, 243, 447, 952, 62), "68%"), ((1909, 0, 0, 783, 0), "41%"), ((1537, 320, 356, 755, 5), "50%")];
    for ((cl, xe, xr, fcl, fxe), shown) in rows {
        let m = MetricsReport::from_counts(cl, xe, xr, int(fcl), int(fxe));
        let t = (cl + xe + xr) as i64;
        let r = BigRational::new(BigInt::from(fcl + fxe + xr as i64), BigInt::from(t));
        ensure(m.t as i64 == t && m.r == r && m.display_rate() == shown, || format!("row {cl}/{xe}/{xr}: R = {} shown as {}", m.r, m.display_rate()))?;
    }
    let full = MetricsReport::from_counts(1446, 243, 447, int(952), int(62));
    ensure(full.r == BigRational::new(BigInt::from(1461), BigInt::from(2136)), || format!("R = {}", full.r))
}

fn all_programs() -> Vec<(String, String)> {
    let mut v = common::corpus();
    v.extend(fuzz::corpus(0, FUZZ_PROGRAMS));
    v
}

fn soundness() -> Verdict {
    let lib = default_library_spec();
    let mut checked = 0;
    let mut violations = Vec::new();
    for (name, text) in all_programs() {
        let p = parse(&name, &text).map_err(|e| format!("{name}: {e}"))?;
        let Ok(report) = run(&p, &lib, DEFAULT_STEP_LIMIT) else { continue };
        if report.status.hit_step_limit() {
            continue;
        }
        checked += 1;
        let warnings = check_program(&p, &SpecSet::declared(&p), &lib);
        for leak in uncovered(&report, &warnings) {
            violations.push(format!("{name}: site {:?}", leak.site));
        }
    }
    ensure(checked >= 200, || format!("only {checked} programs ran"))?;
    ensure(violations.is_empty(), || format!("uncovered leaks: {violations:?}"))
}

fn pass_rate(report: &PipelineReport) -> (usize, usize, Vec<String>) {
    let mut failures = Vec::new();
    let mut total = 0;
    for f in &report.files {
        for (id, v) in &f.verdicts {
            total += 1;
            if !v.is_pass() {
                failures.push(format!("{}: {id}: {v:?}", f.file));
            }
        }
    }
    (total - failures.len(), total, failures)
}

fn repair_safety() -> Verdict {
    let (pass, total, failures) = pass_rate(&pipeline(&common::corpus()));
    ensure(total > 0 && failures.is_empty(), || format!("corpus: {pass}/{total} pass: {failures:?}"))?;
    let (pass, total, failures) = pass_rate(&pipeline(&fuzz::corpus(0, FUZZ_PROGRAMS)));
    ensure(total > 0 && pass * 100 >= total * 99, || format!("fuzz: {pass}/{total} pass: {failures:?}"))
}

/// The report fields a semantics-preserving edit must not change.
fn observable(r: &RuntimeReport) -> impl PartialEq + std::fmt::Debug + '_ {
    (&r.leaked_sites, &r.use_after_close, &r.stdout, &r.status)
}

fn preservation() -> Verdict {
    let lib = default_library_spec();
    let mut compared = 0;
    for (name, text) in common::corpus() {
        let p = parse(&name, &text).map_err(|e| e.to_string())?;
        let Ok(before) = run(&p, &lib, DEFAULT_STEP_LIMIT) else { continue };
        let (finalized, _) = finalize_fields(&p);
        let errors = reject_final_writes(&finalized);
        ensure(errors.is_empty(), || format!("{name}: final writes {errors:?}"))?;
        let (local, _) = field_to_local(&finalized);
        let reparsed = parse(&name, &pretty_print(&local)).map_err(|e| format!("{name}: {e}"))?;
        for (stage, q) in [("finalize_fields", &finalized), ("field_to_local", &local), ("printed", &reparsed)] {
            let after = run(q, &lib, DEFAULT_STEP_LIMIT).map_err(|e| e.to_string())?;
            ensure(observable(&before) == observable(&after), || format!("{name}: {stage} changed {:?} to {:?}", observable(&before), observable(&after)))?;
        }
        compared += 1;
    }
    ensure(compared == common::corpus().len(), || format!("only {compared} corpus programs have a main"))
}

const FILTER_BASE: &str = "@MustCall(\"close\") class W {
  @Owning private Socket s;
  @EnsuresCalledMethods(value=\"s\", methods=\"close\") void close() { s.close(); }
  void log() { }
  static Socket make() { return new Socket(); }
  W(int p) { s = new Socket(); }
}";

/// Constructor overwrite warnings on `s` before and after the filter.
fn ctor_overwrites(src: &str) -> Result<(usize, usize), String> {
    let p = parse("w.mj", src).map_err(|e| format!("{e}\n{src}"))?;
    let raw = check_program(&p, &SpecSet::declared(&p), &default_library_spec());
    let count = |ws: &[leakward::checker::Warning]| ws.iter().filter(|w| w.kind == WarningKind::OwningFieldOverwrite && w.method.is_ctor()).count();
    let before = count(&raw);
    Ok((before, count(&filter_constructor_first_writes(raw, &p))))
}

fn filter_truth_table() -> Verdict {
    let private = ("@Owning private Socket s;", "@Owning Socket s;");
    let init = ("@Owning private Socket s;", "@Owning private Socket s = new Socket();");
    let direct = ("W(int p) { s = new Socket(); }", "W(int p) { if (p == 1) { s = new Socket(); } }");
    let once = ("W(int p) { s = new Socket(); }", "W(int p) { s = new Socket(); s = new Socket(); }");
    let call_before = ("W(int p) { s = new Socket(); }", "W(int p) { log(); s = new Socket(); }");
    let call_in_value = ("W(int p) { s = new Socket(); }", "W(int p) { s = W.make(); }");
    let apply = |edits: &[(&str, &str)]| edits.iter().fold(FILTER_BASE.to_string(), |s, (from, to)| s.replace(from, to));
    let cases: Vec<(&str, String, bool)> = vec![
        ("all satisfied", apply(&[]), false),
        ("not private", apply(&[private]), true),
        ("initializer", apply(&[init]), true),
        ("nested write", apply(&[direct]), true),
        ("written twice", apply(&[once]), true),
        ("call before", apply(&[call_before]), true),
        ("call in value", apply(&[call_in_value]), true),
        ("not private, initializer", apply(&[private, init]), true),
        ("not private, call before", apply(&[private, call_before]), true),
        ("initializer, written twice", apply(&[init, once]), true),
        ("nested write, call in value", apply(&[("W(int p) { s = new Socket(); }", "W(int p) { if (p == 1) { s = W.make(); } }")]), true),
        ("written twice, call before", apply(&[("W(int p) { s = new Socket(); }", "W(int p) { log(); s = new Socket(); s = new Socket(); }")]), true),
    ];
    for (label, src, kept) in cases {
        let (before, after) = ctor_overwrites(&src)?;
        ensure(before > 0, || format!("{label}: checker raised no overwrite"))?;
        ensure((after > 0) == kept, || format!("{label}: {before} warnings, {after} kept"))?;
    }
    Ok(())
}

const PRECLOSE_BASE: &str = "class A {
  private Socket s;
  A() { s = new Socket(); }
  void reset() { s = new Socket(); }
  void close() { s.close(); }
}
class Holder {
  Socket kept;
}";

fn eligible(src: &str, lib: &LibrarySpec) -> Result<Vec<u8>, String> {
    let p = parse("a.mj", src).map_err(|e| format!("{e}\n{src}"))?;
    let specs = infer_specs(&p, lib);
    let ea = EscapeAnalysis::new(&p, &specs, lib);
    Ok(pre_close_eligible(&p, &ea, "A", "s"))
}

fn preclose_table() -> Verdict {
    let lib = default_library_spec();
    let extra = |m: &str| PRECLOSE_BASE.replace("  void close()", &format!("  {m}\n  void close()"));
    let cases: Vec<(&str, String, bool, Option<u8>)> = vec![
        ("all satisfied", PRECLOSE_BASE.to_string(), true, None),
        ("not private", PRECLOSE_BASE.replace("private Socket s;", "Socket s;"), false, Some(1)),
        ("assigned a parameter", extra("void adopt(Socket o) { s = o; }"), false, Some(2)),
        ("stored elsewhere", extra("void share(Holder h) { h.kept = s; }"), false, Some(3)),
        ("getter", extra("Socket get() { return s; }"), false, Some(3)),
        (
            "non-fresh value",
            PRECLOSE_BASE.replace("void reset() { s = new Socket(); }", "void reset() { s = A.make(); }\n  static Socket make() { return new Socket(); }"),
            false,
            Some(2),
        ),
    ];
    for (label, src, expected, condition) in cases {
        let failed = eligible(&src, &lib)?;
        ensure(failed.is_empty() == expected, || format!("{label}: failing conditions {failed:?}"))?;
        if let Some(c) = condition {
            ensure(failed.contains(&c), || format!("{label}: condition {c} not among {failed:?}"))?;
        }
    }
    Ok(())
}

fn determinism() -> Verdict {
    let mut sources = common::corpus();
    sources.extend(fuzz::corpus(0, 50));
    let first = pipeline(&sources);
    let second = pipeline(&sources);
    let (a, b) = (serde_json::to_string(&first.to_json()).unwrap(), serde_json::to_string(&second.to_json()).unwrap());
    ensure(a == b, || "two runs differ".into())?;
    let patched: Vec<(String, String)> = first.files.iter().map(|f| (f.file.clone(), f.final_text.clone())).collect();
    let third = pipeline(&patched);
    let repatched: Vec<&str> = third.files.iter().filter(|f| !f.patches.is_empty()).map(|f| f.file.as_str()).collect();
    ensure(repatched.is_empty(), || format!("patched again: {repatched:?}"))
}

fn expected_dispositions() -> BTreeMap<&'static str, Vec<&'static str>> {
    let fixed = |n| vec!["Fixed"; n];
    BTreeMap::from([
        ("case_actors.mj", fixed(1)),
        ("case_parser_tables.mj", fixed(2)),
        ("close_in_finally.mj", fixed(1)),
        ("conditional_close.mj", fixed(1)),
        ("containment_getter.mj", vec!["Fixed", "Unfixable(EscapesArg)"]),
        ("containment_proxy.mj", fixed(1)),
        ("discarded_allocation.mj", fixed(1)),
        ("escapes_to_callee.mj", vec!["Unfixable(EscapesArg)"]),
        ("factory_client.mj", fixed(1)),
        ("field_to_local.mj", fixed(1)),
        ("fig1_mywriter.mj", fixed(1)),
        ("fig2_tempfilewriter.mj", fixed(2)),
        ("final_field_try_catch.mj", vec!["ResolvedByTransform"]),
        ("leak_free.mj", vec![]),
        ("nested_writers.mj", fixed(1)),
        ("overwrite_shared.mj", vec!["ResolvedByTransform", "Unfixable(PreCloseConditionsFail(2))"]),
        ("preclose_socket.mj", fixed(2)),
        ("stored_in_collection.mj", vec!["Unfixable(EscapesToField)"]),
        ("unfixable_field_escape.mj", vec!["Unfixable(EscapesToField)"]),
        ("unfixable_return_escape.mj", vec!["Unfixable(EscapesReturn)"]),
    ])
}

fn effectiveness() -> Verdict {
    let start = Instant::now();
    let report = pipeline(&common::corpus());
    let expected = expected_dispositions();
    ensure(report.files.len() == expected.len(), || format!("{} files, {} expected", report.files.len(), expected.len()))?;
    for f in &report.files {
        let mut got: Vec<String> = f.dispositions.values().map(ToString::to_string).collect();
        got.sort();
        let want = expected.get(f.file.as_str()).ok_or_else(|| format!("unexpected file {}", f.file))?;
        ensure(got == *want, || format!("{}: {got:?}, expected {want:?}", f.file))?;
        for (id, d) in &f.dispositions {
            if *d == Disposition::Fixed {
                let shifted = f.shift.shifted_of(id);
                let validated = shifted.iter().all(|s| f.verdicts.iter().any(|(v, verdict)| v == s && verdict.is_pass()));
                ensure(validated, || format!("{}: {id} fixed without a validated patch", f.file))?;
            }
        }
        let recomputed = compute_metrics(
            &leakward::pipeline::WarningSetPair { w_orig: f.w_orig.clone(), w_xform: f.w_xform.clone() },
            &f.shift,
            &f.outcomes.iter().filter(|(_, o)| o.is_fixed()).map(|(id, _)| id.clone()).collect(),
        );
        ensure(recomputed == f.metrics, || format!("{}: metrics {} vs {}", f.file, recomputed.table(), f.metrics.table()))?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))
}

/// One test per criterion, so the harness prints one pass/fail line each.
macro_rules! criteria {
    ($($n:literal $test:ident $name:literal $check:ident;)*) => {$(
        #[test]
        fn $test() {
            match $check() {
                Ok(()) => println!("criterion {}: PASS {}", $n, $name),
                Err(why) => panic!("criterion {}: FAIL {}: {why}", $n, $name),
            }
        }
    )*};
}

criteria! {
    1 criterion_1_worked_example_corpus "worked-example corpus" worked_examples;
    2 criterion_2_metric_arithmetic "metric arithmetic" reference_rows;
    3 criterion_3_checker_soundness "checker soundness against the interpreter" soundness;
    4 criterion_4_repair_safety "repair safety" repair_safety;
    5 criterion_5_transform_preservation "transform semantic preservation" preservation;
    6 criterion_6_first_write_filter "constructor first-write filter" filter_truth_table;
    7 criterion_7_pre_close_eligibility "pre-close eligibility" preclose_table;
    8 criterion_8_determinism_and_idempotence "determinism and idempotence" determinism;
    9 criterion_9_end_to_end_effectiveness "end-to-end effectiveness" effectiveness;
}
