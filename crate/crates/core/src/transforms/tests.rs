use super::*;
use crate::checker::{check_program, reject_final_writes};
use crate::frontend::{default_library_spec, parse, pretty_print, StmtKind, Visibility};
use crate::inference::SpecSet;
use crate::oracle::{run, DEFAULT_STEP_LIMIT};

fn p(src: &str) -> Program {
    parse("t.mj", src).unwrap()
}

fn same(a: &Program, b: &str) {
    assert_eq!(pretty_print(a), pretty_print(&p(b)));
}

const SERVER: &str = "class MyClass {
  private ServerSocket serverSocket;
  public MyClass(int port) {
    try {
      serverSocket = new ServerSocket(port);
    } catch (Exception e) {
      e.printStackTrace();
    }
  }
}";

#[test]
fn final_with_temporary_for_try_assignment() {
    let (out, log) = finalize_fields(&p(SERVER));
    same(
        &out,
        "class MyClass {
  private final ServerSocket serverSocket;
  public MyClass(int port) {
    ServerSocket tempSocket = null;
    try {
      tempSocket = new ServerSocket(port);
    } catch (Exception e) {
      e.printStackTrace();
    } finally {
      serverSocket = tempSocket;
    }
  }
}",
    );
    assert_eq!(log.entries.len(), 1);
    assert!(reject_final_writes(&out).is_empty());
}

#[test]
fn plain_single_assignment_becomes_final() {
    let (out, log) = finalize_fields(&p("class A { private Socket s; private int n = 3; A() { s = new Socket(); } }"));
    same(&out, "class A { private final Socket s; private final int n = 3; A() { s = new Socket(); } }");
    assert_eq!(log.entries.len(), 2);
}

#[test]
fn ineligible_fields_are_untouched() {
    for src in [
        "class A { private Socket s; A() { s = new Socket(); } void m() { s = new Socket(); } }",
        "class A { Socket s; A() { s = new Socket(); } }",
        "class A { private Socket s; A(int c) { if (c == 1) { s = new Socket(); } } }",
        "class A { private Socket s; }",
        "class A { private Socket s; A() { try { s = new Socket(); reset(); } catch (Exception e) { } } void reset() { } }",
    ] {
        let (out, log) = finalize_fields(&p(src));
        assert!(log.is_empty(), "{src}");
        assert_eq!(out, p(src));
    }
}

#[test]
fn field_used_by_one_method_becomes_local() {
    let src = "class A { private Socket s; void m() { s = new Socket(); this.s.send(1); } }
               class M { static void main() { A a = new A(); a.m(); } }";
    let (out, log) = field_to_local(&p(src));
    same(
        &out,
        "class A { void m() { Socket s = new Socket(); s.send(1); } }
         class M { static void main() { A a = new A(); a.m(); } }",
    );
    assert_eq!(log.entries[0].kind, TransformKind::FieldToLocal);
    let lib = default_library_spec();
    let before = run(&p(src), &lib, DEFAULT_STEP_LIMIT).unwrap();
    let after = run(&out, &lib, DEFAULT_STEP_LIMIT).unwrap();
    assert_eq!((before.stdout, before.status, before.leaked_sites.len()), (after.stdout, after.status, after.leaked_sites.len()));
}

#[test]
fn assignment_inside_try_body_is_demoted_in_place() {
    let src = "class A { private Socket s; void m() { try { s = new Socket(); s.send(1); } catch (Exception e) { } } }";
    let (out, _) = field_to_local(&p(src));
    same(&out, "class A { void m() { try { Socket s = new Socket(); s.send(1); } catch (Exception e) { } } }");
}

#[test]
fn fields_shared_or_read_first_stay_fields() {
    for src in [
        "class A { private Socket s; void m() { s = new Socket(); } void n() { s.send(1); } }",
        "class A { private Socket s; void m() { s.send(1); s = new Socket(); } }",
        "class A { private Socket s; void m(int c) { if (c == 1) { s = new Socket(); } s.send(1); } }",
        "class A { private Socket s = null; void m() { s = new Socket(); s.send(1); } }",
        "class A { Socket s; void m() { s = new Socket(); s.send(1); } }",
        "class A { private Socket s; void m() { try { s = new Socket(); } catch (Exception e) { s.send(1); } } }",
    ] {
        let (out, log) = field_to_local(&p(src));
        assert!(log.is_empty(), "{src}");
        assert_eq!(out, p(src));
    }
}

const FIG2: &str = "class TempFileWriter {
  private PrintStream stream;
  public TempFileWriter(String path) { stream = new PrintStream(path); }
  void resetStream(String path) { stream = new PrintStream(path); }
  public void printSomething() { stream.println(\"hello\"); }
}
class Client {
  public static void print() {
    TempFileWriter tmp = new TempFileWriter(\"f.txt\");
    tmp.printSomething();
  }
}";

#[test]
fn finalizer_injected_for_flagged_constructor_allocation() {
    let lib = default_library_spec();
    let program = p(FIG2);
    let warnings = check_program(&program, &SpecSet::declared(&program), &lib);
    let (out, log) = inject_finalizers(&program, &warnings, &lib);
    let class = out.class("TempFileWriter").unwrap();
    assert_eq!(class.implements.as_deref(), Some("AutoCloseable"));
    let close = class.method("close").unwrap();
    assert_eq!(close.visibility, Visibility::Public);
    let mut body = String::new();
    for s in &close.body.stmts {
        crate::frontend::printer::print_stmt(&mut body, s, 0);
    }
    assert_eq!(body.trim(), "stream.close();");
    assert_eq!(log.entries[0].fields, vec!["stream".to_string()]);
    assert_eq!(replay(&program, &log, &lib), out);
    let again = inject_finalizers(&out, &warnings, &lib);
    assert!(again.1.is_empty());
}

#[test]
fn finalizer_guards_fields_not_always_assigned() {
    let lib = default_library_spec();
    let program = p(SERVER);
    let warnings = check_program(&program, &SpecSet::declared(&program), &lib);
    let (out, _) = inject_finalizers(&program, &warnings, &lib);
    let close = out.class("MyClass").unwrap().method("close").unwrap();
    assert!(matches!(close.body.stmts[0].kind, StmtKind::If { .. }));
}

#[test]
fn classes_with_close_or_disposal_are_skipped() {
    let lib = default_library_spec();
    for src in [
        "class W { private Socket s; W() { s = new Socket(); } void close() { } }",
        "class W { private Socket s; W() { s = new Socket(); } void stop() { s.close(); } }",
        "class W implements Runnable { private Socket s; W() { s = new Socket(); } }",
    ] {
        let program = p(src);
        let warnings = check_program(&program, &SpecSet::declared(&program), &lib);
        assert!(inject_finalizers(&program, &warnings, &lib).1.is_empty(), "{src}");
    }
}

#[test]
fn transforms_are_idempotent() {
    let lib = default_library_spec();
    for src in [SERVER, FIG2] {
        let program = p(src);
        let warnings = check_program(&program, &SpecSet::declared(&program), &lib);
        let (once, _) = transform_all(&program, &warnings, &lib);
        let (twice, log) = transform_all(&once, &warnings, &lib);
        assert_eq!(once, twice);
        assert!(log.is_empty());
    }
}
