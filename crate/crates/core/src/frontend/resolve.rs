//! Name resolution and static types.
//!
//! A bare identifier resolves to the innermost local, then a field of the
//! enclosing class, then a class name. MiniJ has no inheritance, so field and
//! method lookup is a single table probe.

use super::ast::*;
use super::libspec::{LibrarySpec, ReturnMode};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolved {
    Local { ty: String },
    Field { class: String, ty: String, is_static: bool },
    Class(String),
    Unknown,
}

/// Lexical scopes of local variables: name and declared type.
#[derive(Debug, Clone, Default)]
pub struct Scopes {
    frames: Vec<Vec<(String, String)>>,
}

impl Scopes {
    pub fn for_method(m: &MethodDecl) -> Self {
        let mut s = Scopes { frames: vec![Vec::new()] };
        for p in &m.params {
            s.declare(&p.name, &p.ty);
        }
        s
    }

    pub fn push(&mut self) {
        self.frames.push(Vec::new());
    }

    pub fn pop(&mut self) {
        self.frames.pop();
    }

    pub fn declare(&mut self, name: &str, ty: &str) {
        if self.frames.is_empty() {
            self.frames.push(Vec::new());
        }
        self.frames.last_mut().unwrap().push((name.to_string(), ty.to_string()));
    }

    pub fn lookup(&self, name: &str) -> Option<&str> {
        self.frames.iter().rev().flat_map(|f| f.iter().rev()).find(|(n, _)| n == name).map(|(_, t)| t.as_str())
    }
}

/// Typing context for one class.
#[derive(Clone, Copy)]
pub struct TypeCtx<'a> {
    pub program: &'a Program,
    pub libspec: &'a LibrarySpec,
    pub class: &'a ClassDecl,
}

impl<'a> TypeCtx<'a> {
    pub fn new(program: &'a Program, libspec: &'a LibrarySpec, class: &'a ClassDecl) -> Self {
        TypeCtx { program, libspec, class }
    }

    pub fn is_class_name(&self, name: &str) -> bool {
        self.program.class(name).is_some() || self.libspec.is_library_class(name)
    }

    pub fn resolve(&self, scopes: &Scopes, name: &str) -> Resolved {
        if let Some(ty) = scopes.lookup(name) {
            return Resolved::Local { ty: ty.to_string() };
        }
        if let Some(f) = self.class.field(name) {
            return Resolved::Field { class: self.class.name.clone(), ty: f.ty.clone(), is_static: f.modifiers.is_static };
        }
        if self.is_class_name(name) {
            return Resolved::Class(name.to_string());
        }
        Resolved::Unknown
    }

    /// Static type; `None` for void calls and unresolvable names.
    pub fn type_of(&self, scopes: &Scopes, e: &Expr) -> Option<String> {
        match &e.kind {
            ExprKind::New { class, .. } => Some(class.clone()),
            ExprKind::Name(n) => match self.resolve(scopes, n) {
                Resolved::Local { ty } | Resolved::Field { ty, .. } => Some(ty),
                Resolved::Class(c) => Some(c),
                Resolved::Unknown => None,
            },
            ExprKind::This => Some(self.class.name.clone()),
            ExprKind::Field { recv, name } => {
                let owner = self.type_of(scopes, recv)?;
                self.program.class(&owner)?.field(name).map(|f| f.ty.clone())
            }
            ExprKind::Call { recv, method, .. } => {
                let owner = match recv {
                    None => self.class.name.clone(),
                    Some(r) => self.type_of(scopes, r)?,
                };
                self.return_type(&owner, method)
            }
            ExprKind::Null => Some("null".to_string()),
            ExprKind::Int(_) => Some("int".to_string()),
            ExprKind::Str(_) => Some("String".to_string()),
            ExprKind::Binary { .. } => Some("boolean".to_string()),
        }
    }

    /// Result type of `owner.method(..)`; library results are `Object`.
    pub fn return_type(&self, owner: &str, method: &str) -> Option<String> {
        if let Some(c) = self.program.class(owner) {
            return c.method(method)?.return_type.clone();
        }
        match self.libspec.method(owner, method)?.ret {
            ReturnMode::Void => None,
            _ => Some("Object".to_string()),
        }
    }
}
