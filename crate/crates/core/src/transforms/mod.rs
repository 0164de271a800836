//! Semantics-preserving rewrites that make resource ownership visible:
//! promoting single-assignment fields to `final`, demoting method-private
//! fields to locals, and giving resource-owning classes a `close` method.

mod finalize;
mod finalizer;
mod to_local;

use serde::Serialize;
use serde_json::{json, Value};

use crate::checker::Warning;
use crate::frontend::{number_sites, walk, Expr, ExprKind, LibrarySpec, Program, Stmt, StmtKind};

pub use finalize::finalize_fields;
pub use finalizer::inject_finalizers;
pub use to_local::field_to_local;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TransformKind {
    FinalizeField,
    FieldToLocal,
    InjectFinalizer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Edit {
    pub kind: TransformKind,
    pub class: String,
    /// The field for field edits, the injected method otherwise.
    pub member: String,
    /// Fields the injected finalizer disposes; empty for field edits.
    pub fields: Vec<String>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct EditLog {
    pub entries: Vec<Edit>,
}

impl EditLog {
    pub fn extend(&mut self, other: EditLog) {
        self.entries.extend(other.entries);
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> Value {
        json!(self.entries)
    }
}

/// Runs the three transforms in order. `warnings` are those of a check
/// without specifications; they select the classes that get a finalizer.
pub fn transform_all(program: &Program, warnings: &[Warning], libspec: &LibrarySpec) -> (Program, EditLog) {
    let (p, mut log) = finalize_fields(program);
    let (p, l) = field_to_local(&p);
    log.extend(l);
    let (p, l) = inject_finalizers(&p, warnings, libspec);
    log.extend(l);
    (p, log)
}

/// Re-applies each logged edit to `program`; replaying the log of a
/// transform on its input reproduces its output.
pub fn replay(program: &Program, log: &EditLog, libspec: &LibrarySpec) -> Program {
    let mut p = program.clone();
    for e in &log.entries {
        let next = match e.kind {
            TransformKind::FinalizeField => finalize::finalize_one(&p, &e.class, &e.member),
            TransformKind::FieldToLocal => to_local::demote_one(&p, &e.class, &e.member),
            TransformKind::InjectFinalizer => finalizer::inject_one(&p, &e.class, &e.fields, &finalizer::must_calls(&p, libspec, &e.class, &e.fields)),
        };
        if let Some(next) = next {
            p = next;
        }
    }
    number_sites(&mut p);
    p
}

/// True if `e` is `this.field` or a bare `field`.
fn is_field_ref(e: &Expr, field: &str) -> bool {
    match &e.kind {
        ExprKind::Name(n) => n == field,
        ExprKind::Field { recv, name } => name == field && matches!(recv.kind, ExprKind::This),
        _ => false,
    }
}

/// True if `s` reads or writes `field` of the enclosing object. Callers
/// rule out locals shadowing `field` first.
fn mentions_field(s: &Stmt, field: &str) -> bool {
    let mut found = false;
    walk::stmt_exprs(s, &mut |e| found |= is_field_ref(e, field));
    found
}

/// True if some program text writes `field` through a receiver other than
/// `this`, which no per-class reasoning can account for.
fn written_from_outside(program: &Program, field: &str) -> bool {
    program.classes.iter().any(|c| {
        c.constructors.iter().chain(&c.methods).any(|m| {
            let mut found = false;
            walk::block_stmts(&m.body, &mut |s| {
                if let StmtKind::Assign { target: Expr { kind: ExprKind::Field { recv, name }, .. }, .. } = &s.kind {
                    found |= name == field && !matches!(recv.kind, ExprKind::This);
                }
            });
            found
        })
    })
}

/// True if some expression reads `field` through a receiver other than `this`.
fn accessed_from_outside(program: &Program, field: &str) -> bool {
    program.classes.iter().any(|c| {
        let inits = c.fields.iter().filter_map(|f| f.initializer.as_ref());
        let mut found = false;
        let mut visit = |e: &Expr| {
            if let ExprKind::Field { recv, name } = &e.kind {
                found |= name == field && !matches!(recv.kind, ExprKind::This);
            }
        };
        for e in inits {
            walk::expr(e, &mut visit);
        }
        for m in c.constructors.iter().chain(&c.methods) {
            walk::block_exprs(&m.body, &mut visit);
        }
        found
    })
}

#[cfg(test)]
mod tests;
