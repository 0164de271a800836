use std::collections::{BTreeSet, HashSet};

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::FrontendError;

const KEYWORDS: &[&str] =
    &["class", "implements", "private", "public", "static", "final", "void", "new", "null", "this", "return", "if", "else", "while", "try", "catch", "finally"];

/// Parses MiniJ source. Allocation sites and call ids are numbered on the way out.
pub fn parse(source_name: &str, src: &str) -> Result<Program, FrontendError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { toks: tokens, i: 0 };
    let mut classes = Vec::new();
    while !p.at(&Tok::Eof) {
        classes.push(p.class_decl()?);
    }
    let mut program = Program { source_name: source_name.to_string(), classes };
    check_duplicates(&program)?;
    super::number_sites(&mut program);
    Ok(program)
}

/// Parses a single expression; used by tests and by the repair templates.
pub fn parse_expr(src: &str) -> Result<Expr, FrontendError> {
    let mut p = Parser { toks: tokenize(src)?, i: 0 };
    let e = p.expr()?;
    p.expect(&Tok::Eof)?;
    Ok(e)
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let j = (self.i + k).min(self.toks.len() - 1);
        &self.toks[j].tok
    }

    fn pos(&self) -> Pos {
        self.toks[self.i].pos
    }

    fn at(&self, t: &Tok) -> bool {
        self.peek() == t
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.at(t) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn error<T>(&self, what: &str) -> Result<T, FrontendError> {
        Err(FrontendError::syntax(self.pos(), format!("expected {what}, found {}", self.peek().describe())))
    }

    fn expect(&mut self, t: &Tok) -> Result<(), FrontendError> {
        if self.eat(t) {
            Ok(())
        } else {
            self.error(&t.describe())
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), FrontendError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            self.error(&format!("`{kw}`"))
        }
    }

    /// A non-keyword identifier.
    fn ident(&mut self) -> Result<String, FrontendError> {
        match self.peek().clone() {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                self.advance();
                Ok(s)
            }
            _ => self.error("identifier"),
        }
    }

    fn at_plain_ident(&self, k: usize) -> bool {
        matches!(self.peek_at(k), Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()))
    }

    fn annotations(&mut self) -> Result<Vec<(Annotation, Pos)>, FrontendError> {
        let mut out = Vec::new();
        while self.at(&Tok::At) {
            let pos = self.pos();
            self.advance();
            let name = self.ident()?;
            let ann = match name.as_str() {
                "Owning" => AnnotationKind::Owning,
                "NotOwning" => AnnotationKind::NotOwning,
                "MustCall" => {
                    let args = self.annotation_args()?;
                    let mut methods = None;
                    for (key, v) in args {
                        match key.as_deref() {
                            None | Some("value") if methods.is_none() => methods = Some(v),
                            _ => return Err(FrontendError::syntax(pos, "bad @MustCall argument")),
                        }
                    }
                    AnnotationKind::MustCall(methods.unwrap_or_default())
                }
                "EnsuresCalledMethods" => {
                    let args = self.annotation_args()?;
                    let (mut field, mut methods) = (None, None);
                    for (key, v) in args {
                        match key.as_deref() {
                            None | Some("value") if field.is_none() => field = Some(v),
                            Some("methods") if methods.is_none() => methods = Some(v),
                            _ => return Err(FrontendError::syntax(pos, "bad @EnsuresCalledMethods argument")),
                        }
                    }
                    let field = match field.as_deref() {
                        Some([f]) => f.strip_prefix("this.").unwrap_or(f).to_string(),
                        _ => return Err(FrontendError::syntax(pos, "@EnsuresCalledMethods needs exactly one field")),
                    };
                    let methods = methods.ok_or_else(|| FrontendError::syntax(pos, "@EnsuresCalledMethods needs methods"))?;
                    AnnotationKind::EnsuresCalledMethods { field, methods }
                }
                other => return Err(FrontendError::syntax(pos, format!("unknown annotation @{other}"))),
            };
            out.push((Annotation::declared(ann), pos));
        }
        Ok(out)
    }

    /// `( v )`, `( k=v, ... )`, where each v is a string or `{ s, ... }`.
    #[allow(clippy::type_complexity)]
    fn annotation_args(&mut self) -> Result<Vec<(Option<String>, Vec<String>)>, FrontendError> {
        let mut out = Vec::new();
        self.expect(&Tok::LParen)?;
        if self.eat(&Tok::RParen) {
            return Ok(out);
        }
        loop {
            let key = if self.at_plain_ident(0) && self.peek_at(1) == &Tok::Assign {
                let k = self.ident()?;
                self.advance();
                Some(k)
            } else {
                None
            };
            let value = if self.eat(&Tok::LBrace) {
                let mut vs = Vec::new();
                if !self.at(&Tok::RBrace) {
                    loop {
                        vs.push(self.string_lit()?);
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                self.expect(&Tok::RBrace)?;
                vs
            } else {
                vec![self.string_lit()?]
            };
            out.push((key, value));
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(&Tok::RParen)?;
        Ok(out)
    }

    fn string_lit(&mut self) -> Result<String, FrontendError> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.advance();
                Ok(s)
            }
            _ => self.error("string literal"),
        }
    }

    fn class_decl(&mut self) -> Result<ClassDecl, FrontendError> {
        let anns = self.annotations()?;
        for (a, pos) in &anns {
            if !matches!(a.kind, AnnotationKind::MustCall(_)) {
                return Err(FrontendError::syntax(*pos, "only @MustCall may annotate a class"));
            }
        }
        let pos = self.pos();
        self.expect_kw("class")?;
        let name = self.ident()?;
        let implements = if self.eat_kw("implements") { Some(self.ident()?) } else { None };
        self.expect(&Tok::LBrace)?;
        let mut class = ClassDecl {
            name,
            implements,
            annotations: anns.into_iter().map(|(a, _)| a).collect(),
            fields: Vec::new(),
            constructors: Vec::new(),
            methods: Vec::new(),
            pos,
        };
        while !self.eat(&Tok::RBrace) {
            if self.at(&Tok::Eof) {
                return self.error("`}`");
            }
            self.member(&mut class)?;
        }
        Ok(class)
    }

    fn member(&mut self, class: &mut ClassDecl) -> Result<(), FrontendError> {
        let anns = self.annotations()?;
        let pos = self.pos();
        let mut visibility = Visibility::Package;
        let mut mods = FieldModifiers::default();
        loop {
            if self.eat_kw("public") {
                if visibility != Visibility::Package {
                    return Err(FrontendError::syntax(pos, "duplicate visibility modifier"));
                }
                visibility = Visibility::Public;
            } else if self.eat_kw("private") {
                if visibility != Visibility::Package {
                    return Err(FrontendError::syntax(pos, "duplicate visibility modifier"));
                }
                visibility = Visibility::Private;
                mods.is_private = true;
            } else if self.eat_kw("static") {
                mods.is_static = true;
            } else if self.eat_kw("final") {
                mods.is_final = true;
            } else {
                break;
            }
        }

        let is_ctor = matches!(self.peek(), Tok::Ident(s) if *s == class.name) && self.peek_at(1) == &Tok::LParen;
        if is_ctor {
            if mods.is_static || mods.is_final || !anns.is_empty() {
                return Err(FrontendError::syntax(pos, "invalid constructor modifiers"));
            }
            self.advance();
            let params = self.params()?;
            let body = self.block()?;
            class.constructors.push(MethodDecl {
                name: CTOR_NAME.to_string(),
                visibility,
                is_static: false,
                params,
                return_type: None,
                body,
                annotations: Vec::new(),
                pos,
            });
            return Ok(());
        }

        let ty = if self.eat_kw("void") { None } else { Some(self.ident()?) };
        let name = self.ident()?;
        if self.at(&Tok::LParen) {
            if mods.is_final {
                return Err(FrontendError::syntax(pos, "methods cannot be final"));
            }
            for (a, apos) in &anns {
                let ok = match a.kind {
                    AnnotationKind::EnsuresCalledMethods { .. } => true,
                    AnnotationKind::Owning | AnnotationKind::NotOwning => ty.is_some(),
                    AnnotationKind::MustCall(_) => false,
                };
                if !ok {
                    return Err(FrontendError::syntax(*apos, "annotation not allowed on method"));
                }
            }
            let params = self.params()?;
            let body = self.block()?;
            class.methods.push(MethodDecl {
                name,
                visibility,
                is_static: mods.is_static,
                params,
                return_type: ty,
                body,
                annotations: anns.into_iter().map(|(a, _)| a).collect(),
                pos,
            });
            return Ok(());
        }

        let Some(ty) = ty else {
            return Err(FrontendError::syntax(pos, "field cannot have type void"));
        };
        if visibility == Visibility::Public {
            return Err(FrontendError::syntax(pos, "fields cannot be public"));
        }
        check_ownership_anns(&anns)?;
        let initializer = if self.eat(&Tok::Assign) { Some(self.expr()?) } else { None };
        self.expect(&Tok::Semi)?;
        class.fields.push(FieldDecl { name, ty, modifiers: mods, initializer, annotations: anns.into_iter().map(|(a, _)| a).collect(), pos });
        Ok(())
    }

    fn params(&mut self) -> Result<Vec<Param>, FrontendError> {
        self.expect(&Tok::LParen)?;
        let mut out = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(out);
        }
        loop {
            let anns = self.annotations()?;
            check_ownership_anns(&anns)?;
            let ty = self.ident()?;
            let name = self.ident()?;
            out.push(Param { name, ty, annotations: anns.into_iter().map(|(a, _)| a).collect() });
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(&Tok::RParen)?;
        Ok(out)
    }

    fn block(&mut self) -> Result<Block, FrontendError> {
        self.expect(&Tok::LBrace)?;
        let mut stmts = Vec::new();
        while !self.eat(&Tok::RBrace) {
            if self.at(&Tok::Eof) {
                return self.error("`}`");
            }
            stmts.push(self.stmt()?);
        }
        Ok(Block { stmts })
    }

    fn stmt(&mut self) -> Result<Stmt, FrontendError> {
        let pos = self.pos();
        if self.eat_kw("if") {
            self.expect(&Tok::LParen)?;
            let cond = self.expr()?;
            self.expect(&Tok::RParen)?;
            let then_block = self.block()?;
            let else_block = if self.eat_kw("else") { Some(self.block()?) } else { None };
            return Ok(Stmt::new(StmtKind::If { cond, then_block, else_block }, pos));
        }
        if self.eat_kw("while") {
            self.expect(&Tok::LParen)?;
            let cond = self.expr()?;
            self.expect(&Tok::RParen)?;
            let body = self.block()?;
            return Ok(Stmt::new(StmtKind::While { cond, body }, pos));
        }
        if self.eat_kw("try") {
            let body = self.block()?;
            let catch = if self.eat_kw("catch") {
                self.expect(&Tok::LParen)?;
                let ty = self.ident()?;
                let name = self.ident()?;
                self.expect(&Tok::RParen)?;
                Some(CatchClause { ty, name, body: self.block()? })
            } else {
                None
            };
            let finally = if self.eat_kw("finally") { Some(self.block()?) } else { None };
            if catch.is_none() && finally.is_none() {
                return self.error("`catch` or `finally`");
            }
            return Ok(Stmt::new(StmtKind::Try { body, catch, finally }, pos));
        }
        if self.eat_kw("return") {
            let value = if self.at(&Tok::Semi) { None } else { Some(self.expr()?) };
            self.expect(&Tok::Semi)?;
            return Ok(Stmt::new(StmtKind::Return(value), pos));
        }
        if self.at_plain_ident(0) && self.at_plain_ident(1) {
            let ty = self.ident()?;
            let name = self.ident()?;
            let init = if self.eat(&Tok::Assign) { Some(self.expr()?) } else { None };
            self.expect(&Tok::Semi)?;
            return Ok(Stmt::new(StmtKind::LocalDecl { ty, name, init }, pos));
        }
        let e = self.expr()?;
        if self.eat(&Tok::Assign) {
            if !matches!(e.kind, ExprKind::Name(_) | ExprKind::Field { .. }) {
                return Err(FrontendError::syntax(e.pos, "invalid assignment target"));
            }
            let value = self.expr()?;
            self.expect(&Tok::Semi)?;
            return Ok(Stmt::new(StmtKind::Assign { target: e, value }, pos));
        }
        if !matches!(e.kind, ExprKind::Call { .. } | ExprKind::New { .. }) {
            return Err(FrontendError::syntax(e.pos, "expression statement must be a call or `new`"));
        }
        self.expect(&Tok::Semi)?;
        Ok(Stmt::new(StmtKind::Expr(e), pos))
    }

    fn expr(&mut self) -> Result<Expr, FrontendError> {
        let lhs = self.postfix()?;
        let op = match self.peek() {
            Tok::EqEq => BinOp::Eq,
            Tok::NotEq => BinOp::Ne,
            _ => return Ok(lhs),
        };
        let pos = self.pos();
        self.advance();
        let rhs = self.postfix()?;
        if matches!(self.peek(), Tok::EqEq | Tok::NotEq) {
            return Err(FrontendError::syntax(self.pos(), "comparisons do not chain"));
        }
        Ok(Expr::new(ExprKind::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) }, pos))
    }

    fn postfix(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.primary()?;
        while self.at(&Tok::Dot) {
            self.advance();
            let pos = self.pos();
            let name = self.ident()?;
            if self.at(&Tok::LParen) {
                let args = self.args()?;
                e = Expr::new(ExprKind::Call { recv: Some(Box::new(e)), method: name, args, call: CallId(0) }, pos);
            } else {
                e = Expr::new(ExprKind::Field { recv: Box::new(e), name }, pos);
            }
        }
        Ok(e)
    }

    fn primary(&mut self) -> Result<Expr, FrontendError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(n) => {
                self.advance();
                Ok(Expr::new(ExprKind::Int(n), pos))
            }
            Tok::Str(s) => {
                self.advance();
                Ok(Expr::new(ExprKind::Str(s), pos))
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(&Tok::RParen)?;
                Ok(e)
            }
            Tok::Ident(s) if s == "null" => {
                self.advance();
                Ok(Expr::new(ExprKind::Null, pos))
            }
            Tok::Ident(s) if s == "this" => {
                self.advance();
                Ok(Expr::new(ExprKind::This, pos))
            }
            Tok::Ident(s) if s == "new" => {
                self.advance();
                let class = self.ident()?;
                let args = self.args()?;
                Ok(Expr::new(ExprKind::New { class, args, site: SiteId(0) }, pos))
            }
            Tok::Ident(_) => {
                let name = self.ident()?;
                if self.at(&Tok::LParen) {
                    let args = self.args()?;
                    Ok(Expr::new(ExprKind::Call { recv: None, method: name, args, call: CallId(0) }, pos))
                } else {
                    Ok(Expr::new(ExprKind::Name(name), pos))
                }
            }
            _ => self.error("expression"),
        }
    }

    fn args(&mut self) -> Result<Vec<Expr>, FrontendError> {
        self.expect(&Tok::LParen)?;
        let mut out = Vec::new();
        if self.eat(&Tok::RParen) {
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            if !self.eat(&Tok::Comma) {
                break;
            }
        }
        self.expect(&Tok::RParen)?;
        Ok(out)
    }
}

fn check_ownership_anns(anns: &[(Annotation, Pos)]) -> Result<(), FrontendError> {
    for (a, pos) in anns {
        if !matches!(a.kind, AnnotationKind::Owning | AnnotationKind::NotOwning) {
            return Err(FrontendError::syntax(*pos, "only @Owning/@NotOwning allowed here"));
        }
    }
    Ok(())
}

fn check_duplicates(program: &Program) -> Result<(), FrontendError> {
    let dup = |name: &str, pos: Pos| FrontendError::DuplicateName { name: name.to_string(), line: pos.line, col: pos.col };
    let mut classes = HashSet::new();
    for c in &program.classes {
        if !classes.insert(c.name.as_str()) {
            return Err(dup(&c.name, c.pos));
        }
        let mut fields = HashSet::new();
        for f in &c.fields {
            if !fields.insert(f.name.as_str()) {
                return Err(dup(&format!("{}.{}", c.name, f.name), f.pos));
            }
        }
        let mut methods = HashSet::new();
        for m in &c.methods {
            if !methods.insert(m.name.as_str()) {
                return Err(dup(&format!("{}.{}", c.name, m.name), m.pos));
            }
        }
        let mut arities = BTreeSet::new();
        for k in &c.constructors {
            if !arities.insert(k.params.len()) {
                return Err(dup(&format!("{}.<init>/{}", c.name, k.params.len()), k.pos));
            }
        }
        for m in c.constructors.iter().chain(&c.methods) {
            let mut params = HashSet::new();
            for p in &m.params {
                if !params.insert(p.name.as_str()) {
                    return Err(dup(&p.name, m.pos));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_has_no_classes() {
        assert!(parse("e.mj", "").unwrap().classes.is_empty());
        assert!(parse("e.mj", "  // nothing\n").unwrap().classes.is_empty());
    }

    #[test]
    fn parses_annotated_wrapper() {
        let src = r#"
@MustCall("close")
class MyWriter {
  @Owning private PrintWriter pw;
  MyWriter(String path) { pw = new PrintWriter(path); }
  @EnsuresCalledMethods(value="pw", methods="close")
  void close() { pw.close(); }
}
"#;
        let p = parse("w.mj", src).unwrap();
        let c = &p.classes[0];
        assert_eq!(c.must_call_annotation(), Some(&["close".to_string()][..]));
        assert!(c.fields[0].has_annotation(&AnnotationKind::Owning));
        assert!(c.fields[0].modifiers.is_private);
        assert_eq!(c.constructors.len(), 1);
        assert_eq!(c.constructors[0].params[0].ty, "String");
        assert_eq!(c.methods[0].annotations[0].kind, AnnotationKind::EnsuresCalledMethods { field: "pw".into(), methods: vec!["close".into()] });
        assert_eq!(c.fields[0].pos.line, 4);
    }

    #[test]
    fn statements_and_expressions() {
        let src = r#"
class A {
  static void m(int k) {
    S s = null;
    try { s = new S(k); s.go(); } catch (Exception e) { e.printStackTrace(); } finally {
      if (s != null) { s.close(); } else { helper(); }
    }
    while (k == 0) { k = 1; }
    return;
  }
  static void helper() { }
}
"#;
        let p = parse("a.mj", src).unwrap();
        let body = &p.classes[0].methods[0].body.stmts;
        assert_eq!(body.len(), 4);
        assert!(matches!(body[1].kind, StmtKind::Try { catch: Some(_), finally: Some(_), .. }));
        assert!(matches!(body[3].kind, StmtKind::Return(None)));
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse("b.mj", "class A {\n  void m() { x = ; }\n}").unwrap_err();
        assert!(matches!(err, FrontendError::Syntax { line: 2, col: 18, .. }), "{err:?}");
    }

    #[test]
    fn duplicate_names_are_rejected() {
        assert!(matches!(parse("d.mj", "class A {} class A {}"), Err(FrontendError::DuplicateName { .. })));
        assert!(matches!(parse("d.mj", "class A { int x; int x; }"), Err(FrontendError::DuplicateName { .. })));
        assert!(matches!(parse("d.mj", "class A { A(int a) {} A(int b) {} }"), Err(FrontendError::DuplicateName { .. })));
    }

    #[test]
    fn misplaced_annotations_are_rejected() {
        assert!(parse("x.mj", "@Owning class A {}").is_err());
        assert!(parse("x.mj", "class A { @MustCall(\"c\") int x; }").is_err());
        assert!(parse("x.mj", "class A { @Owning void m() {} }").is_err());
    }

    #[test]
    fn chained_comparison_is_rejected() {
        assert!(parse_expr("a == b == c").is_err());
        assert!(parse_expr("(a == b) != c").is_ok());
    }

    #[test]
    fn must_call_array_form() {
        let p = parse("m.mj", "@MustCall({\"a\", \"b\"}) class A { void a() {} void b() {} }").unwrap();
        assert_eq!(p.classes[0].must_call_annotation().unwrap(), ["a", "b"]);
    }
}
