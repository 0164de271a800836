use super::*;
use crate::frontend::{default_library_spec, parse};
use crate::inference::infer_specs;

fn analyze<T>(src: &str, f: impl FnOnce(&EscapeAnalysis<'_>, &Program) -> T) -> T {
    let program = parse("t.mj", src).unwrap();
    let lib = default_library_spec();
    let specs = infer_specs(&program, &lib);
    let ea = EscapeAnalysis::new(&program, &specs, &lib);
    f(&ea, &program)
}

/// The result for the `n`-th allocation in `class.method`.
fn nth_alloc(ea: &EscapeAnalysis<'_>, class: &str, method: &str, n: usize) -> EscapeResult {
    let key = MethodKey::method(class, method);
    let site = ea
        .cfg(&key)
        .unwrap()
        .nodes
        .iter()
        .filter_map(|x| match &x.instr {
            Instr::Alloc { site, .. } => Some(*site),
            _ => None,
        })
        .nth(n)
        .unwrap();
    ea.escapes_site(&key, site).unwrap()
}

const PROXY: &str = "class FileEventProxy {
  private Scanner scanner;
  public FileEventProxy(InputStream in) {
    this.scanner = new Scanner(in);
  }
  public boolean hasNextEvent() {
    return scanner.hasNextLine();
  }
}";

#[test]
fn accessor_field_read_only_as_receiver_is_contained() {
    analyze(PROXY, |ea, _| {
        assert!(ea.field_contained("FileEventProxy", "scanner"));
        assert_eq!(ea.classify("FileEventProxy"), WrapperClassification::ResourceAccessor { witness_field: "scanner".into() });
    });
}

#[test]
fn getter_breaks_containment() {
    let src = "class Wrapper {
      private InputStream s;
      Wrapper(InputStream in) { s = in; }
      InputStream getStream() { return s; }
    }";
    analyze(src, |ea, _| {
        assert!(!ea.field_contained("Wrapper", "s"));
        assert_eq!(ea.classify("Wrapper"), WrapperClassification::NotAWrapper);
    });
}

#[test]
fn unread_private_field_is_contained_and_public_is_not() {
    analyze("class A { private Socket s; Socket t; }", |ea, _| {
        assert!(ea.field_contained("A", "s"));
        assert!(!ea.field_contained("A", "t"));
        assert!(!ea.field_contained("A", "missing"));
    });
}

#[test]
fn storing_a_read_into_another_field_flips_containment() {
    let base = "class A { private Socket s; private Socket t; A(Socket x) { s = x; } void use() { s.send(1); } }";
    let more = "class A { private Socket s; private Socket t; A(Socket x) { s = x; } void use() { s.send(1); t = s; } }";
    assert!(analyze(base, |ea, _| ea.field_contained("A", "s")));
    assert!(!analyze(more, |ea, _| ea.field_contained("A", "s")));
}

#[test]
fn caching_task_without_finalizer_is_accessor() {
    let src = "class Task implements TimerTask {
      private final Puppeteer m_Puppeteer;
      public Task(Puppeteer puppeteer) { m_Puppeteer = puppeteer; }
      public void run() { m_Puppeteer.act(); }
    }";
    analyze(src, |ea, _| {
        assert_eq!(ea.classify("Task"), WrapperClassification::ResourceAccessor { witness_field: "m_Puppeteer".into() });
    });
}

#[test]
fn writer_with_inferred_close_is_alias() {
    let src = "class MyWriter {
      private PrintWriter pw;
      MyWriter(String path) { pw = new PrintWriter(path); }
      void close() { pw.close(); }
    }";
    analyze(src, |ea, _| {
        assert_eq!(ea.classify("MyWriter"), WrapperClassification::ResourceAlias { finalizer: "close".into(), witness_field: "pw".into() });
    });
}

#[test]
fn local_only_object_does_not_escape() {
    let src = "class TempFileWriter {
      private PrintStream stream;
      public TempFileWriter(String path) { stream = new PrintStream(path); }
      public void printSomething() { stream.println(\"hello\"); }
      public void close() { stream.close(); }
    }
    class Client {
      public static void print() {
        TempFileWriter tmp = new TempFileWriter(\"f.txt\");
        tmp.printSomething();
      }
    }";
    analyze(src, |ea, _| {
        let r = nth_alloc(ea, "Client", "print", 0);
        assert!(!r.escapes);
        assert_eq!(r.tracked_locals, BTreeSet::from(["tmp".to_string()]));
    });
}

#[test]
fn store_into_plain_object_field_escapes() {
    let src = "class Holder { Socket s; }
    class C { static void m() { Holder h = new Holder(); Socket s = new Socket(); h.s = s; } }";
    analyze(src, |ea, _| {
        let r = nth_alloc(ea, "C", "m", 1);
        assert!(r.escapes);
        assert_eq!(r.routes, vec![Route::ToField { class: "Holder".into(), field: "s".into() }]);
    });
}

#[test]
fn value_absorbed_by_accessor_is_tracked_through_it() {
    let client = format!(
        "{PROXY}
    class Client {{
      static void m() {{
        InputStream s = new FileInputStream(\"file.txt\");
        FileEventProxy proxy = new FileEventProxy(s);
        proxy.hasNextEvent();
      }}
      static FileEventProxy leak() {{
        InputStream s = new FileInputStream(\"file.txt\");
        FileEventProxy proxy = new FileEventProxy(s);
        return proxy;
      }}
    }}"
    );
    analyze(&client, |ea, _| {
        let r = nth_alloc(ea, "Client", "m", 0);
        assert!(!r.escapes);
        assert_eq!(r.wrapper_sinks[0].0, "FileEventProxy");
        assert!(r.wrapper_sinks[0].1.is_wrapper());
        assert_eq!(r.tracked_locals, BTreeSet::from(["proxy".to_string(), "s".to_string()]));
        let r = nth_alloc(ea, "Client", "leak", 0);
        assert_eq!(r.routes, vec![Route::Returned]);
    });
}

#[test]
fn collections_returns_and_user_calls_are_routes() {
    let src = "class C {
      static void sink(Socket s) { }
      static void a() { List l = new List(); Socket s = new Socket(); l.add(s); }
      static Socket b() { Socket s = new Socket(); Socket t = s; return t; }
      static void c() { Socket s = new Socket(); sink(s); }
      static void d() { Socket s = new Socket(); s.send(1); Timer t = new Timer(\"x\"); t.schedule(s, 0, 1); }
    }";
    analyze(src, |ea, _| {
        assert_eq!(nth_alloc(ea, "C", "a", 1).routes, vec![Route::StoredInCollection]);
        assert_eq!(nth_alloc(ea, "C", "b", 0).routes, vec![Route::Returned]);
        assert_eq!(nth_alloc(ea, "C", "c", 0).routes, vec![Route::PassedAsArg { callee: "C.sink".into(), position: 0 }]);
        assert!(!nth_alloc(ea, "C", "d", 0).escapes);
    });
}

#[test]
fn wrapper_recursion_through_own_class_terminates() {
    let src = "class Node {
      private Socket s;
      Node(Socket x) { s = x; Node n = new Node(x); }
    }";
    analyze(src, |ea, _| {
        assert_eq!(ea.classify("Node"), WrapperClassification::NotAWrapper);
    });
}
