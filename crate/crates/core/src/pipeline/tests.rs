use num_bigint::BigInt;

use super::*;
use crate::frontend::default_library_spec;

fn q(n: i64, d: i64) -> num_rational::BigRational {
    num_rational::BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn int(n: i64) -> num_rational::BigRational {
    q(n, 1)
}

#[test]
fn reference_rows_round_to_their_percentages() {
    let row = MetricsReport::from_counts(1446, 243, 447, int(952), int(62));
    assert_eq!(row.t, 2136);
    assert_eq!(row.r, q(1461, 2136));
    assert_eq!(row.display_rate(), "68%");
    assert_eq!(MetricsReport::from_counts(1909, 0, 0, int(783), int(0)).display_rate(), "41%");
    assert_eq!(MetricsReport::from_counts(1537, 320, 356, int(755), int(5)).display_rate(), "50%");
}

#[test]
fn empty_warning_sets_resolve_fully() {
    let m = MetricsReport::empty();
    assert_eq!(m.t, 0);
    assert_eq!(m.r, int(1));
    assert_eq!(m.display_rate(), "100%");
}

#[test]
fn percentages_round_half_up() {
    assert_eq!(MetricsReport::from_counts(200, 0, 0, int(1), int(0)).display_rate(), "1%");
    assert_eq!(MetricsReport::from_counts(200, 0, 0, int(0), int(0)).display_rate(), "0%");
    assert_eq!(MetricsReport::from_counts(8, 0, 0, int(1), int(0)).display_rate(), "13%");
}

const FIG2: &str = "class TempFileWriter {
  private PrintStream stream;

  public TempFileWriter(String path) {
      stream = new PrintStream(path);
  }

  void resetStream(String path) {

    stream = new PrintStream(path);
  }

  public void printSomething() {
    stream.println(\"hello\");
  }
}

class Client {
  public static void print() {
    TempFileWriter tmp = new TempFileWriter(\"f.txt\");
    tmp.printSomething();
  }
}
";

fn run_one(src: &str) -> FileReport {
    let sources = vec![("t.mj".to_string(), src.to_string())];
    run_pipeline(&sources, &default_library_spec(), &PipelineConfig::default()).unwrap().files.remove(0)
}

#[test]
fn wrapper_leak_and_overwrite_are_both_fixed() {
    let r = run_one(FIG2);
    let lines: Vec<u32> = r.w_orig.iter().map(|w| w.line).collect();
    assert_eq!(lines, vec![5, 10]);
    assert_eq!(r.w_xform.len(), 2);
    let roots: BTreeSet<&str> = r.shift.roots();
    assert_eq!(roots, r.w_orig.iter().map(|w| w.id.as_str()).collect());
    let templates: BTreeSet<String> = r.outcomes.values().map(ToString::to_string).collect();
    assert_eq!(templates, BTreeSet::from(["Fixed(PreCloseInsertion)".to_string(), "Fixed(TryFinallyWrap)".to_string()]));
    assert!(r.final_warnings.is_empty(), "{:?}", r.final_warnings);
    assert_eq!(r.metrics.r, int(1));
    assert!(r.dispositions.values().all(|d| *d == Disposition::Fixed));
}

#[test]
fn client_warning_shifts_to_the_library_allocation_in_the_wrapper() {
    let src = "class MyWriter {
  private PrintWriter pw;
  MyWriter(String path) {
    pw = new PrintWriter(path);
  }
  void close() {
    pw.close();
  }
}
class Use {
  static void use() {
    MyWriter writer = new MyWriter(\"f.txt\");
  }
}
";
    let r = run_one(src);
    assert_eq!(r.w_orig.len(), 1);
    assert_eq!(r.w_orig[0].line, 4);
    assert_eq!(r.w_inferred.iter().map(|w| w.line).collect::<Vec<_>>(), vec![12]);
    let root = &r.w_orig[0].id;
    assert_eq!(r.shift.multiplicity(root), 1);
    assert_eq!(r.shift.pairs[&r.w_xform[0].id], *root);
    assert_eq!(r.dispositions[root], Disposition::Fixed);
}

fn warning(id: &str) -> Warning {
    let origin = crate::checker::Origin::Param(0);
    let mut w = Warning::new(WarningKind::UnsatisfiedObligation, "t.mj", 1, "Socket", &crate::frontend::MethodKey::method("A", "m"), origin, String::new());
    w.id = id.to_string();
    w
}

#[test]
fn partially_fixed_root_earns_partial_credit() {
    let mut shift = ShiftMap::default();
    for s in ["a", "b", "c", "d"] {
        shift.pairs.insert(s.into(), "root".into());
    }
    shift.pairs.insert("lib".into(), "lib".into());
    assert_eq!(shift.multiplicity("root"), 4);
    let fixed = BTreeSet::from(["a".to_string()]);
    assert_eq!(shift.fixed_count("root", &fixed), 1);
    let pair = WarningSetPair { w_orig: vec![warning("root"), warning("lib")], w_xform: Vec::new() };
    let m = compute_metrics(&pair, &shift, &fixed);
    assert_eq!((m.cl, m.xe, m.xr), (2, 0, 0));
    assert_eq!(m.f_cl, q(1, 4));
    assert_eq!(m.r, q(1, 8));
    let pair = WarningSetPair { w_orig: Vec::new(), w_xform: Vec::new() };
    let m = compute_metrics(&pair, &shift, &fixed);
    assert_eq!((m.cl, m.xe, m.f_xe.clone()), (0, 2, q(1, 4)));
}

#[test]
fn original_warning_without_shifted_counterpart_is_resolved() {
    let pair = WarningSetPair { w_orig: vec![warning("gone")], w_xform: Vec::new() };
    let m = compute_metrics(&pair, &ShiftMap::default(), &BTreeSet::new());
    assert_eq!((m.cl, m.xe, m.xr), (0, 0, 1));
    assert_eq!(m.r, int(1));
}

#[test]
fn leak_free_program_scores_one() {
    let r = run_one("class A { static void main() { int x = 1; } }");
    assert_eq!(r.metrics.t, 0);
    assert_eq!(r.metrics.r, int(1));
    assert!(r.patches.is_empty());
}

#[test]
fn returned_resource_stays_unfixable_and_sets_exit_code() {
    let sources = vec![("t.mj".to_string(), "class F { static Socket open() { Socket s = new Socket(); s.send(1); return s; } }".to_string())];
    let report = run_pipeline(&sources, &default_library_spec(), &PipelineConfig::default()).unwrap();
    let f = &report.files[0];
    assert_eq!(f.dispositions.values().next().unwrap().to_string(), "Unfixable(EscapesReturn)");
    assert_eq!(report.exit_code(), 2);
}

#[test]
fn parse_errors_carry_the_stage() {
    let sources = vec![("bad.mj".to_string(), "class {".to_string())];
    let e = run_pipeline(&sources, &default_library_spec(), &PipelineConfig::default()).unwrap_err();
    assert_eq!(e.stage, Stage::Parse);
    assert_eq!(e.file, "bad.mj");
}
