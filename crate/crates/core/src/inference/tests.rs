use super::*;
use crate::frontend::{default_library_spec, parse, pretty_print};

fn infer(src: &str) -> (Program, SpecSet) {
    let p = parse("t.mj", src).unwrap();
    let s = infer_specs(&p, &default_library_spec());
    (p, s)
}

#[test]
fn wrapper_gets_owning_field_and_finalizer() {
    let (_, s) = infer("class MyWriter { private PrintWriter pw; MyWriter(String p) { pw = new PrintWriter(p); } void close() { pw.close(); } }");
    assert!(s.is_owning_field("MyWriter", "pw"));
    assert_eq!(s.class_must_call("MyWriter").unwrap(), ["close"]);
    assert_eq!(s.ensures("MyWriter", "close")[0].methods, ["close"]);
}

#[test]
fn no_resource_fields_no_specs() {
    let (_, s) = infer("class A { private String s; void close() { } }");
    assert!(s.is_empty());
}

#[test]
fn any_finalizer_name_and_null_guard() {
    let (_, s) = infer("class A { private Socket s; void shutdown() { if (s != null) { s.close(); } } }");
    assert_eq!(s.class_must_call("A").unwrap(), ["shutdown"]);
}

#[test]
fn conditional_disposal_is_not_enough() {
    let (_, s) = infer("class A { private Socket s; void shutdown(int c) { if (c == 1) { s.close(); } } }");
    assert!(s.is_empty());
}

#[test]
fn non_private_fields_are_ignored() {
    let (_, s) = infer("class A { Socket s; void close() { s.close(); } }");
    assert!(s.is_empty());
}

#[test]
fn wrapper_of_wrapper() {
    let (_, s) = infer(
        "class A { private Socket s; void close() { s.close(); } } \
         class B { private A a; void stop() { a.close(); } }",
    );
    assert_eq!(s.class_must_call("B").unwrap(), ["stop"]);
    assert!(s.is_owning_field("B", "a"));
}

#[test]
fn finalizer_choice_prefers_more_fields_then_close() {
    let (_, s) = infer("class A { private Socket s; private Socket t; void a() { s.close(); t.close(); } void close() { s.close(); } }");
    assert_eq!(s.class_must_call("A").unwrap(), ["a"]);
    let (_, s) = infer("class A { private Socket s; void b() { s.close(); } void close() { s.close(); } }");
    assert_eq!(s.class_must_call("A").unwrap(), ["close"]);
}

#[test]
fn write_specs_prints_annotations_and_is_idempotent() {
    let (p, s) = infer("class MyWriter { private PrintWriter pw; MyWriter(String p) { pw = new PrintWriter(p); } void close() { pw.close(); } }");
    let once = write_specs(&p, &s).unwrap();
    let text = pretty_print(&once);
    assert!(text.starts_with("@MustCall(\"close\")\nclass MyWriter {\n  @Owning private PrintWriter pw;"));
    assert!(text.contains("  @EnsuresCalledMethods(value=\"pw\", methods=\"close\")\n  void close() {"));
    assert_eq!(write_specs(&once, &s).unwrap(), once);
    assert_eq!(write_specs(&p, &SpecSet::default()).unwrap(), p);
}

#[test]
fn declared_annotations_win() {
    let (p, s) = infer("@MustCall(\"stop\") class A { private Socket s; void stop() { s.close(); } void close() { s.close(); } }");
    assert_eq!(s.class_must_call("A").unwrap(), ["stop"]);
    let mut other = s.clone();
    other.class_mustcall.insert("A".into(), ClassSpec { must_call: vec!["close".into()], provenance: Provenance::Inferred });
    assert!(matches!(write_specs(&p, &other), Err(InferenceError::AnnotationConflict { .. })));
}
