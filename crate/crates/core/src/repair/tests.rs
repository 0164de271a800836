use super::*;
use crate::inference::check_with_inference;

struct Setup {
    program: Program,
    specs: SpecSet,
    warnings: Vec<Warning>,
    lib: LibrarySpec,
}

fn setup(src: &str) -> Setup {
    let program = parse("t.mj", src).unwrap();
    let lib = default_library_spec();
    let (specs, warnings) = check_with_inference(&program, &lib);
    Setup { program, specs, warnings, lib }
}

impl Setup {
    fn plan(&self, w: &Warning) -> Planned {
        let ea = EscapeAnalysis::new(&self.program, &self.specs, &self.lib);
        plan_fix(w, &self.program, &self.specs, &self.lib, &ea).unwrap()
    }

    fn warning_at(&self, line: u32) -> &Warning {
        self.warnings.iter().find(|w| w.line == line).unwrap_or_else(|| panic!("no warning at {line}: {:?}", self.warnings))
    }

    /// Plans and applies the fix for the warning at `line`.
    fn fix(&self, line: u32, config: RepairConfig) -> (RepairPlan, Program, Patch) {
        let Planned::Plan(plan) = self.plan(self.warning_at(line)) else { panic!("unfixable") };
        let text = pretty_print(&self.program);
        let (p, patch) = materialize(&self.program, &text, &plan, &config).unwrap();
        (*plan, p, patch)
    }
}

fn canonical(src: &str) -> String {
    pretty_print(&parse("t.mj", src).unwrap())
}

const TEMP_FILE_WRITER: &str = "class TempFileWriter implements AutoCloseable {
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
  public void close() {
    stream.close();
  }
}
class Client {
  public static void print() {
    TempFileWriter tmp = new TempFileWriter(\"f.txt\");
    tmp.printSomething();
  }
}
";

#[test]
fn client_allocation_is_wrapped_in_try_finally() {
    let s = setup(TEMP_FILE_WRITER);
    let (plan, p, patch) = s.fix(18, RepairConfig::default());
    assert_eq!(plan.template, Template::TryFinallyWrap);
    assert_eq!(plan.finalizer_method, "close");
    let expected = TEMP_FILE_WRITER.replace(
        "    TempFileWriter tmp = new TempFileWriter(\"f.txt\");
    tmp.printSomething();
",
        "    TempFileWriter tmp = null;
    try {
      tmp = new TempFileWriter(\"f.txt\");
      tmp.printSomething();
    } finally {
      if (tmp != null) {
        tmp.close();
      }
    }
",
    );
    assert_eq!(patch.new_text, canonical(&expected));
    assert_eq!(pretty_print(&p), patch.new_text);
    let (_, after) = check_with_inference(&parse("t.mj", &patch.new_text).unwrap(), &s.lib);
    assert!(after.iter().all(|w| w.id != plan.warning_id));
}

#[test]
fn overwrite_gets_a_pre_close_in_either_style() {
    let s = setup(TEMP_FILE_WRITER);
    let (plan, _, patch) = s.fix(7, RepairConfig::default());
    assert_eq!(plan.template, Template::PreCloseInsertion);
    assert_eq!(
        patch.structured_edits[0].inserted,
        "if (stream != null) {\n  try {\n    stream.close();\n  } catch (Exception e) {\n    e.printStackTrace();\n  }\n}\n"
    );
    let (_, _, bare) = s.fix(7, RepairConfig { preclose_style: PreCloseStyle::Propagate });
    assert_eq!(bare.structured_edits[0].inserted, "if (stream != null) {\n  stream.close();\n}\n");
    for text in [&patch.new_text, &bare.new_text] {
        let (_, after) = check_with_inference(&parse("t.mj", text).unwrap(), &s.lib);
        assert!(after.iter().all(|w| w.id != plan.warning_id), "{text}");
    }
}

#[test]
fn returned_resource_is_unfixable() {
    let s = setup("class F { static Socket open() { Socket s = new Socket(); s.send(1); return s; } }");
    for w in &s.warnings {
        assert_eq!(s.plan(w), Planned::Unfixable(UnfixableReason::EscapesReturn));
    }
}

#[test]
fn field_escape_is_unfixable() {
    let s = setup("class H { Socket s; } class F { static void m(H h) { Socket s = new Socket(); h.s = s; } }");
    assert!(!s.warnings.is_empty());
    for w in &s.warnings {
        assert_eq!(s.plan(w), Planned::Unfixable(UnfixableReason::EscapesToField));
    }
}

const ACTORS: &str = "class Task implements TimerTask {
  private final Puppeteer m_Puppeteer;
  public Task(Puppeteer puppeteer) {
    m_Puppeteer = puppeteer;
  }
  public void run() {
    m_Puppeteer.act();
  }
}
class ActorsTest {
  void startPuppeteer() {
    Puppeteer puppeteer = new Puppeteer(\"localhost\");
    new Timer(\"Puppeteer\").schedule(new Task(puppeteer), 0, 1000);
  }
}
";

#[test]
fn accessor_client_closes_the_underlying_resource() {
    let s = setup(ACTORS);
    let (plan, _, patch) = s.fix(12, RepairConfig::default());
    assert_eq!(plan.finalizer_method, "finish");
    let expected = ACTORS.replace(
        "    Puppeteer puppeteer = new Puppeteer(\"localhost\");
    new Timer(\"Puppeteer\").schedule(new Task(puppeteer), 0, 1000);
",
        "    Puppeteer puppeteer = null;
    try {
      puppeteer = new Puppeteer(\"localhost\");
      new Timer(\"Puppeteer\").schedule(new Task(puppeteer), 0, 1000);
    } finally {
      if (puppeteer != null) {
        puppeteer.finish();
      }
    }
",
    );
    assert_eq!(patch.new_text, canonical(&expected));
}

#[test]
fn existing_try_gets_a_finally_close() {
    let src = "class C {
  static void m() {
    Socket s = null;
    try {
      s = new Socket();
      s.send(1);
    } catch (Exception e) {
      e.printStackTrace();
    }
  }
}
";
    let s = setup(src);
    let (plan, _, patch) = s.fix(5, RepairConfig::default());
    assert_eq!(plan.template, Template::CloseInFinally);
    assert!(patch.new_text.contains("} finally {\n      if (s != null) {\n        s.close();"));
    let (_, after) = check_with_inference(&parse("t.mj", &patch.new_text).unwrap(), &s.lib);
    assert!(after.is_empty(), "{after:?}");
}

#[test]
fn pre_close_conditions_are_reported_by_number() {
    let src = "class A {
  private Socket owned;
  private Socket shared;
  Socket open;
  A(Socket given) { owned = new Socket(); shared = given; open = new Socket(); }
  Socket leak() { return owned; }
}";
    let program = parse("t.mj", src).unwrap();
    let lib = default_library_spec();
    let specs = crate::inference::infer_specs(&program, &lib);
    let ea = EscapeAnalysis::new(&program, &specs, &lib);
    assert_eq!(pre_close_eligible(&program, &ea, "A", "owned"), vec![3]);
    assert_eq!(pre_close_eligible(&program, &ea, "A", "shared"), vec![2]);
    assert_eq!(pre_close_eligible(&program, &ea, "A", "open"), vec![1, 3]);
}

#[test]
fn patch_diff_applies_to_original_text() {
    let s = setup(TEMP_FILE_WRITER);
    let (_, _, patch) = s.fix(18, RepairConfig::default());
    let parsed = diffy::Patch::from_str(&patch.diff).unwrap();
    assert_eq!(diffy::apply(&pretty_print(&s.program), &parsed).unwrap(), patch.new_text);
    let (_, _, again) = s.fix(18, RepairConfig::default());
    assert_eq!(patch.diff, again.diff);
}

#[test]
fn plan_on_patched_program_is_stale() {
    let s = setup(TEMP_FILE_WRITER);
    for line in [7, 18] {
        let (plan, patched, patch) = s.fix(line, RepairConfig::default());
        let err = materialize(&patched, &patch.new_text, &plan, &RepairConfig::default()).unwrap_err();
        assert!(matches!(err, RepairError::MaterializationFailure { reason: MaterializationReason::StaleAnchor, .. }));
    }
}

#[test]
fn discarded_allocation_gets_a_fresh_local() {
    let s = setup("class C { static void m() { new Socket(); } }");
    let Planned::Plan(plan) = s.plan(&s.warnings[0]) else { panic!() };
    assert_eq!(plan.fresh_names, vec![format!("{FRESH_PREFIX}0")]);
    let (_, patch) = materialize(&s.program, "", &plan, &RepairConfig::default()).unwrap();
    assert!(patch.new_text.contains("Socket __lw_tmp0 = null;"));
}

#[test]
fn warning_for_missing_site_is_stale() {
    let s = setup("class C { static void m() { Socket s = new Socket(); } }");
    let mut w = s.warnings[0].clone();
    w.origin = Origin::Site { site: SiteId(99), ordinal: 0 };
    let ea = EscapeAnalysis::new(&s.program, &s.specs, &s.lib);
    assert!(matches!(plan_fix(&w, &s.program, &s.specs, &s.lib, &ea), Err(RepairError::StaleWarning(_))));
}
