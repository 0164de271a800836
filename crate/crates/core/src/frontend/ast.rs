//! MiniJ abstract syntax.
//!
//! Source positions ride along on every class, member, statement and
//! expression. [`Pos`] compares equal to every other position, so the
//! derived `PartialEq` on AST nodes is structural equality modulo positions.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl Pos {
    pub fn new(line: u32, col: u32) -> Self {
        Pos { line, col }
    }
}

impl PartialEq for Pos {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl Eq for Pos {}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Allocation-site id of a `new` expression. Numbered in canonical
/// (print) order by [`super::number_sites`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SiteId(pub u32);

/// Id of a method-call expression, numbered like [`SiteId`] on its own counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CallId(pub u32);

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

impl fmt::Display for CallId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Program {
    pub source_name: String,
    pub classes: Vec<ClassDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDecl {
    pub name: String,
    pub implements: Option<String>,
    pub annotations: Vec<Annotation>,
    pub fields: Vec<FieldDecl>,
    pub constructors: Vec<MethodDecl>,
    pub methods: Vec<MethodDecl>,
    pub pos: Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FieldModifiers {
    pub is_private: bool,
    pub is_static: bool,
    pub is_final: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: String,
    pub ty: String,
    pub modifiers: FieldModifiers,
    pub initializer: Option<Expr>,
    pub annotations: Vec<Annotation>,
    pub pos: Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Visibility {
    #[default]
    Package,
    Public,
    Private,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub ty: String,
    pub annotations: Vec<Annotation>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodDecl {
    pub name: String,
    pub visibility: Visibility,
    pub is_static: bool,
    pub params: Vec<Param>,
    /// `None` is `void`; constructors always carry `None`.
    pub return_type: Option<String>,
    pub body: Block,
    pub annotations: Vec<Annotation>,
    pub pos: Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Declared,
    Inferred,
    Injected,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AnnotationKind {
    MustCall(Vec<String>),
    Owning,
    NotOwning,
    EnsuresCalledMethods { field: String, methods: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub kind: AnnotationKind,
    pub provenance: Provenance,
}

impl Annotation {
    pub fn declared(kind: AnnotationKind) -> Self {
        Annotation { kind, provenance: Provenance::Declared }
    }

    pub fn inferred(kind: AnnotationKind) -> Self {
        Annotation { kind, provenance: Provenance::Inferred }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Block {
    pub stmts: Vec<Stmt>,
}

impl Block {
    pub fn new(stmts: Vec<Stmt>) -> Self {
        Block { stmts }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatchClause {
    pub ty: String,
    pub name: String,
    pub body: Block,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    LocalDecl {
        ty: String,
        name: String,
        init: Option<Expr>,
    },
    /// `target` is a `Name` or a `Field` expression.
    Assign {
        target: Expr,
        value: Expr,
    },
    Expr(Expr),
    If {
        cond: Expr,
        then_block: Block,
        else_block: Option<Block>,
    },
    While {
        cond: Expr,
        body: Block,
    },
    Try {
        body: Block,
        catch: Option<CatchClause>,
        finally: Option<Block>,
    },
    Return(Option<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Eq,
    Ne,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub kind: ExprKind,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    New {
        class: String,
        args: Vec<Expr>,
        site: SiteId,
    },
    /// `recv == None` is an unqualified call on the enclosing class.
    Call {
        recv: Option<Box<Expr>>,
        method: String,
        args: Vec<Expr>,
        call: CallId,
    },
    /// Bare identifier: a local, a parameter, an implicit-`this` field or a class name.
    Name(String),
    This,
    Field {
        recv: Box<Expr>,
        name: String,
    },
    Null,
    Int(i64),
    Str(String),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
}

impl Expr {
    pub fn new(kind: ExprKind, pos: Pos) -> Self {
        Expr { kind, pos }
    }

    pub fn name(n: &str) -> Self {
        Expr::new(ExprKind::Name(n.to_string()), Pos::default())
    }

    pub fn null() -> Self {
        Expr::new(ExprKind::Null, Pos::default())
    }
}

impl Stmt {
    pub fn new(kind: StmtKind, pos: Pos) -> Self {
        Stmt { kind, pos }
    }
}

pub const CTOR_NAME: &str = "<init>";

impl Program {
    pub fn class(&self, name: &str) -> Option<&ClassDecl> {
        self.classes.iter().find(|c| c.name == name)
    }

    pub fn class_mut(&mut self, name: &str) -> Option<&mut ClassDecl> {
        self.classes.iter_mut().find(|c| c.name == name)
    }

    /// The unique static `main` method, if exactly one exists.
    pub fn main_method(&self) -> Option<(&ClassDecl, &MethodDecl)> {
        let mut found = self.classes.iter().flat_map(|c| c.methods.iter().filter(|m| m.is_static && m.name == "main").map(move |m| (c, m)));
        let first = found.next()?;
        if found.next().is_some() {
            return None;
        }
        Some(first)
    }
}

impl ClassDecl {
    pub fn field(&self, name: &str) -> Option<&FieldDecl> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn method(&self, name: &str) -> Option<&MethodDecl> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn constructor(&self, arity: usize) -> Option<&MethodDecl> {
        self.constructors.iter().find(|c| c.params.len() == arity)
    }

    pub fn must_call_annotation(&self) -> Option<&[String]> {
        self.annotations.iter().find_map(|a| match &a.kind {
            AnnotationKind::MustCall(ms) => Some(ms.as_slice()),
            _ => None,
        })
    }

    /// Every method and constructor paired with its [`MethodKey`].
    pub fn members(&self) -> impl Iterator<Item = (MethodKey, &MethodDecl)> {
        self.constructors
            .iter()
            .map(move |m| (MethodKey::ctor(&self.name, m.params.len()), m))
            .chain(self.methods.iter().map(move |m| (MethodKey::method(&self.name, &m.name), m)))
    }
}

impl FieldDecl {
    pub fn has_annotation(&self, kind: &AnnotationKind) -> bool {
        self.annotations.iter().any(|a| &a.kind == kind)
    }
}

impl MethodDecl {
    pub fn is_constructor(&self) -> bool {
        self.name == CTOR_NAME
    }
}

/// Identifies a method or constructor within a program. Methods are not
/// overloaded, so constructors are the only members keyed by arity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MethodKey {
    pub class: String,
    pub name: String,
    /// Set for constructors only.
    pub arity: Option<usize>,
}

impl MethodKey {
    pub fn method(class: &str, name: &str) -> Self {
        MethodKey { class: class.to_string(), name: name.to_string(), arity: None }
    }

    pub fn ctor(class: &str, arity: usize) -> Self {
        MethodKey { class: class.to_string(), name: CTOR_NAME.to_string(), arity: Some(arity) }
    }

    pub fn is_ctor(&self) -> bool {
        self.arity.is_some()
    }
}

impl fmt::Display for MethodKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.arity {
            Some(n) => write!(f, "{}.<init>/{}", self.class, n),
            None => write!(f, "{}.{}", self.class, self.name),
        }
    }
}

/// Names that are always in scope as types but are neither user classes nor
/// library resources.
pub const BUILTIN_TYPES: &[&str] = &["int", "boolean", "String", "Object", "Exception"];

pub fn is_builtin_type(ty: &str) -> bool {
    BUILTIN_TYPES.contains(&ty)
}
