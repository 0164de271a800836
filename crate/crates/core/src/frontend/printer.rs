use std::fmt::Write;

use super::ast::*;
use super::lexer::quote;

const INDENT: &str = "  ";

/// Canonical MiniJ text. Output depends only on the AST shape, never on positions.
pub fn pretty_print(program: &Program) -> String {
    let mut out = String::new();
    for (i, c) in program.classes.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        print_class(&mut out, c);
    }
    if out.is_empty() {
        out.push('\n');
    }
    out
}

fn print_class(out: &mut String, c: &ClassDecl) {
    for a in &c.annotations {
        let _ = writeln!(out, "{}", annotation(a));
    }
    out.push_str("class ");
    out.push_str(&c.name);
    if let Some(i) = &c.implements {
        let _ = write!(out, " implements {i}");
    }
    out.push_str(" {\n");
    for f in &c.fields {
        out.push_str(INDENT);
        for a in &f.annotations {
            out.push_str(&annotation(a));
            out.push(' ');
        }
        if f.modifiers.is_private {
            out.push_str("private ");
        }
        if f.modifiers.is_static {
            out.push_str("static ");
        }
        if f.modifiers.is_final {
            out.push_str("final ");
        }
        let _ = write!(out, "{} {}", f.ty, f.name);
        if let Some(init) = &f.initializer {
            let _ = write!(out, " = {}", expr(init));
        }
        out.push_str(";\n");
    }
    let mut first = c.fields.is_empty();
    for m in c.constructors.iter().chain(&c.methods) {
        if !first {
            out.push('\n');
        }
        first = false;
        print_method(out, c, m);
    }
    out.push_str("}\n");
}

fn print_method(out: &mut String, c: &ClassDecl, m: &MethodDecl) {
    for a in &m.annotations {
        let _ = writeln!(out, "{INDENT}{}", annotation(a));
    }
    out.push_str(INDENT);
    match m.visibility {
        Visibility::Public => out.push_str("public "),
        Visibility::Private => out.push_str("private "),
        Visibility::Package => {}
    }
    if m.is_static {
        out.push_str("static ");
    }
    if m.is_constructor() {
        out.push_str(&c.name);
    } else {
        out.push_str(m.return_type.as_deref().unwrap_or("void"));
        out.push(' ');
        out.push_str(&m.name);
    }
    out.push('(');
    for (i, p) in m.params.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        for a in &p.annotations {
            out.push_str(&annotation(a));
            out.push(' ');
        }
        let _ = write!(out, "{} {}", p.ty, p.name);
    }
    out.push_str(") ");
    print_block(out, &m.body, 1);
    out.push('\n');
}

pub fn annotation(a: &Annotation) -> String {
    match &a.kind {
        AnnotationKind::Owning => "@Owning".to_string(),
        AnnotationKind::NotOwning => "@NotOwning".to_string(),
        AnnotationKind::MustCall(ms) => format!("@MustCall({})", string_list(ms)),
        AnnotationKind::EnsuresCalledMethods { field, methods } => {
            format!("@EnsuresCalledMethods(value={}, methods={})", quote(field), string_list(methods))
        }
    }
}

fn string_list(items: &[String]) -> String {
    if items.len() == 1 {
        return quote(&items[0]);
    }
    let inner: Vec<String> = items.iter().map(|s| quote(s)).collect();
    format!("{{{}}}", inner.join(", "))
}

/// Prints `{ ... }` with the opening brace at the current column and the
/// closing brace at `depth - 1` indentation. No trailing newline.
fn print_block(out: &mut String, b: &Block, depth: usize) {
    out.push_str("{\n");
    for s in &b.stmts {
        print_stmt(out, s, depth + 1);
    }
    out.push_str(&INDENT.repeat(depth));
    out.push('}');
}

pub fn print_stmt(out: &mut String, s: &Stmt, depth: usize) {
    out.push_str(&INDENT.repeat(depth));
    match &s.kind {
        StmtKind::LocalDecl { ty, name, init } => {
            let _ = write!(out, "{ty} {name}");
            if let Some(e) = init {
                let _ = write!(out, " = {}", expr(e));
            }
            out.push(';');
        }
        StmtKind::Assign { target, value } => {
            let _ = write!(out, "{} = {};", expr(target), expr(value));
        }
        StmtKind::Expr(e) => {
            let _ = write!(out, "{};", expr(e));
        }
        StmtKind::If { cond, then_block, else_block } => {
            let _ = write!(out, "if ({}) ", expr(cond));
            print_block(out, then_block, depth);
            if let Some(e) = else_block {
                out.push_str(" else ");
                print_block(out, e, depth);
            }
        }
        StmtKind::While { cond, body } => {
            let _ = write!(out, "while ({}) ", expr(cond));
            print_block(out, body, depth);
        }
        StmtKind::Try { body, catch, finally } => {
            out.push_str("try ");
            print_block(out, body, depth);
            if let Some(c) = catch {
                let _ = write!(out, " catch ({} {}) ", c.ty, c.name);
                print_block(out, &c.body, depth);
            }
            if let Some(f) = finally {
                out.push_str(" finally ");
                print_block(out, f, depth);
            }
        }
        StmtKind::Return(v) => match v {
            Some(e) => {
                let _ = write!(out, "return {};", expr(e));
            }
            None => out.push_str("return;"),
        },
    }
    out.push('\n');
}

pub fn expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

fn write_expr(out: &mut String, e: &Expr) {
    match &e.kind {
        ExprKind::New { class, args, .. } => {
            let _ = write!(out, "new {class}(");
            write_args(out, args);
            out.push(')');
        }
        ExprKind::Call { recv, method, args, .. } => {
            if let Some(r) = recv {
                write_operand(out, r);
                out.push('.');
            }
            out.push_str(method);
            out.push('(');
            write_args(out, args);
            out.push(')');
        }
        ExprKind::Name(n) => out.push_str(n),
        ExprKind::This => out.push_str("this"),
        ExprKind::Field { recv, name } => {
            write_operand(out, recv);
            out.push('.');
            out.push_str(name);
        }
        ExprKind::Null => out.push_str("null"),
        ExprKind::Int(n) => {
            let _ = write!(out, "{n}");
        }
        ExprKind::Str(s) => out.push_str(&quote(s)),
        ExprKind::Binary { op, lhs, rhs } => {
            write_operand(out, lhs);
            let _ = write!(out, " {} ", op.symbol());
            write_operand(out, rhs);
        }
    }
}

fn write_operand(out: &mut String, e: &Expr) {
    if matches!(e.kind, ExprKind::Binary { .. }) {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_args(out: &mut String, args: &[Expr]) {
    for (i, a) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        write_expr(out, a);
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn empty_program_prints_newline() {
        assert_eq!(pretty_print(&Program::default()), "\n");
    }

    #[test]
    fn canonical_layout() {
        let src = "@MustCall(\"close\") class W implements AutoCloseable { @Owning private final S s; \
                   W(@Owning S s) { this.s = s; } \
                   @EnsuresCalledMethods(value=\"s\", methods={\"close\", \"flush\"}) public void close() { if (s != null) { s.close(); } } }";
        let expected = "\
@MustCall(\"close\")
class W implements AutoCloseable {
  @Owning private final S s;

  W(@Owning S s) {
    this.s = s;
  }

  @EnsuresCalledMethods(value=\"s\", methods={\"close\", \"flush\"})
  public void close() {
    if (s != null) {
      s.close();
    }
  }
}
";
        assert_eq!(pretty_print(&parse("w.mj", src).unwrap()), expected);
    }

    #[test]
    fn round_trip_is_a_fixed_point() {
        let src = "class A { static int k = 0; static void main() { A a = new A(); try { a.go(\"x\\n\", 3); } \
                   catch (Exception e) { e.printStackTrace(); } finally { k = 1; } while ((a == null) != (k == 0)) { return; } } void go(String s, int n) { } }";
        let p1 = parse("a.mj", src).unwrap();
        let t1 = pretty_print(&p1);
        let p2 = parse("a.mj", &t1).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(t1, pretty_print(&p2));
    }
}
