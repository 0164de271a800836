use super::*;
use crate::frontend::{default_library_spec, parse};
use crate::inference::infer_specs;

fn warns(src: &str) -> Vec<Warning> {
    let p = parse("t.mj", src).unwrap();
    check_program(&p, &SpecSet::declared(&p), &default_library_spec())
}

fn lines(ws: &[Warning]) -> Vec<(WarningKind, u32, String)> {
    ws.iter().map(|w| (w.kind, w.line, w.resource_class.clone())).collect()
}

const FIG1: &str = "// wrapper\n\
class MyWriter {\n\
  private PrintWriter pw;\n\
  MyWriter(String path) {\n\
    pw = new PrintWriter(path);\n\
  }\n\
  // finalizer\n\
  void close() {\n\
    pw.close();\n\
  }\n\
}\n\
class User { static void use() {\n\
    MyWriter writer = new MyWriter(\"f.txt\");\n\
} }\n";

#[test]
fn must_call_sets() {
    let p = parse("t.mj", "@MustCall(\"shutdown\") class A { } class B { }").unwrap();
    let s = SpecSet::declared(&p);
    let lib = default_library_spec();
    assert_eq!(must_call_of("PrintStream", &p, &s, &lib).unwrap().methods, ["close"]);
    assert_eq!(must_call_of("PrintStream", &p, &s, &lib).unwrap().source, MustCallSource::Library);
    assert_eq!(must_call_of("A", &p, &s, &lib).unwrap().methods, ["shutdown"]);
    assert!(must_call_of("B", &p, &s, &lib).unwrap().is_empty());
    assert!(must_call_of("String", &p, &s, &lib).unwrap().is_empty());
    assert_eq!(must_call_of("Nope", &p, &s, &lib), Err(CheckError::UnknownClass("Nope".into())));
}

#[test]
fn closed_on_the_only_path() {
    assert!(warns("class A { void m() { Socket s = new Socket(); s.close(); } }").is_empty());
}

#[test]
fn closed_on_one_branch() {
    let w = warns("class A { void m(int c) { Socket s = new Socket(); if (c == 1) { s.close(); } } }");
    assert_eq!(lines(&w), [(WarningKind::UnsatisfiedObligation, 1, "Socket".into())]);
}

#[test]
fn wrapper_without_specs_warns_in_the_constructor() {
    let w = warns(FIG1);
    assert_eq!(lines(&w), [(WarningKind::UnsatisfiedObligation, 5, "PrintWriter".into())]);
    assert_eq!(w[0].method, MethodKey::ctor("MyWriter", 1));
}

#[test]
fn wrapper_with_specs_warns_at_the_client() {
    let p = parse("t.mj", FIG1).unwrap();
    let lib = default_library_spec();
    let specs = infer_specs(&p, &lib);
    let raw = check_program(&p, &specs, &lib);
    assert_eq!(lines(&raw)[0], (WarningKind::OwningFieldOverwrite, 5, "PrintWriter".into()));
    let w = filter_constructor_first_writes(raw, &p);
    assert_eq!(lines(&w), [(WarningKind::UnsatisfiedObligation, 13, "MyWriter".into())]);
}

#[test]
fn alias_close_and_null_guard() {
    assert!(warns("class A { void m() { Socket s = new Socket(); Socket t = s; t.close(); } }").is_empty());
    assert!(warns("class A { void m() { Socket s = null; try { s = new Socket(); s.connect(); } finally { if (s != null) { s.close(); } } } }").is_empty());
}

#[test]
fn exceptional_path_leaks() {
    let w = warns("class A { void m() { Socket s = new Socket(); s.connect(); s.close(); } }");
    assert_eq!(w.len(), 1);
}

#[test]
fn discharge_by_return_owning_param_and_owning_field() {
    assert!(warns("class A { Socket m() { Socket s = new Socket(); return s; } }").is_empty());
    assert!(warns("class A { void m() { FileWriter w = new FileWriter(\"x\"); BufferedWriter b = new BufferedWriter(w); b.close(); } }").is_empty());
    let src = "@MustCall(\"close\") class W { @Owning private Socket s; \
               @EnsuresCalledMethods(value=\"s\", methods=\"close\") void close() { s.close(); } \
               W(@Owning Socket x) { s = x; } }";
    let p = parse("t.mj", src).unwrap();
    let w = filter_constructor_first_writes(check_program(&p, &SpecSet::declared(&p), &default_library_spec()), &p);
    assert!(w.is_empty(), "{w:?}");
}

#[test]
fn ignored_owning_result_leaks_at_the_call() {
    let w = warns("class A { Socket open() { return new Socket(); } void m() { open(); } }");
    assert_eq!(w.len(), 1);
    assert!(matches!(w[0].origin, Origin::Call { .. }));
}

#[test]
fn overwrite_of_an_open_owning_field() {
    let src = "@MustCall(\"close\") class W { @Owning private Socket s; \
               @EnsuresCalledMethods(value=\"s\", methods=\"close\") void close() { s.close(); } \
               void reset() { s = new Socket(); } }";
    let w = warns(src);
    assert_eq!(w.len(), 1);
    assert_eq!(w[0].kind, WarningKind::OwningFieldOverwrite);
    assert_eq!(w[0].stored_site, Some(SiteId(0)));
    let guarded = src.replace("void reset() {", "void reset() { if (s != null) { s.close(); }");
    assert!(warns(&guarded).is_empty());
}

#[test]
fn field_initializer_store_is_not_an_overwrite() {
    let p = parse("t.mj", "class A { private Socket s = new Socket(); A() {} void close() { s.close(); } }").unwrap();
    let lib = default_library_spec();
    let w = check_program(&p, &infer_specs(&p, &lib), &lib);
    assert!(w.iter().all(|w| w.kind != WarningKind::OwningFieldOverwrite), "{w:?}");
}

#[test]
fn ids_ignore_blank_lines() {
    let a = warns(FIG1);
    let b = warns(&format!("\n\n{FIG1}"));
    assert_eq!(a[0].id, b[0].id);
    assert_ne!(a[0].line, b[0].line);
}

#[test]
fn loop_reallocation_leaks() {
    let w = warns("class A { void m(int c) { Socket s = new Socket(); while (c == 1) { s = new Socket(); } s.close(); } }");
    assert!(!w.is_empty());
}
