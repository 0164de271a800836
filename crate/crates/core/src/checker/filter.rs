//! Suppression of overwrite warnings on provably-first constructor writes.

use super::{Origin, Warning, WarningKind};
use crate::frontend::{walk, ClassDecl, ExprKind, MethodDecl, Program, Stmt, StmtKind};

/// Assignments in `m` whose target is named `field`, in source order. Their
/// indices match the write ordinals of the lowered method.
pub(crate) fn named_writes<'a>(m: &'a MethodDecl, field: &str) -> Vec<&'a Stmt> {
    let mut out = Vec::new();
    walk::block_stmts(&m.body, &mut |s| {
        if let StmtKind::Assign { target, .. } = &s.kind {
            if matches!(&target.kind, ExprKind::Name(n) | ExprKind::Field { name: n, .. } if n == field) {
                out.push(s);
            }
        }
    });
    out
}

fn stmt_has_call(s: &Stmt) -> bool {
    let mut found = false;
    walk::stmt_exprs(s, &mut |e| found |= walk::has_call(e));
    found
}

/// True when the six first-write conditions hold for write number `write`
/// of `field` in constructor `ctor` of `class`. Instance initializer blocks
/// do not exist in MiniJ, so the third condition holds vacuously, and so
/// does the no-delegation half of the sixth.
pub fn is_first_constructor_write(class: &ClassDecl, ctor: &MethodDecl, field: &str, write: usize) -> bool {
    let Some(decl) = class.field(field) else { return false };
    if !decl.modifiers.is_private || decl.initializer.is_some() {
        return false;
    }
    let Some(&stmt) = named_writes(ctor, field).get(write) else { return false };
    let StmtKind::Assign { target, value } = &stmt.kind else { return false };
    if !walk::targets_field(ctor, target, field) {
        return false;
    }
    let Some(pos) = ctor.body.stmts.iter().position(|s| std::ptr::eq(s, stmt)) else { return false };
    let mut writes = 0;
    walk::block_stmts(&ctor.body, &mut |s| {
        if let StmtKind::Assign { target, .. } = &s.kind {
            if walk::targets_field(ctor, target, field) {
                writes += 1;
            }
        }
    });
    if writes != 1 {
        return false;
    }
    !ctor.body.stmts[..pos].iter().any(stmt_has_call) && !walk::has_call(value)
}

/// Drops the owning-field-overwrite warnings raised on the first write of a
/// field in a constructor.
pub fn filter_constructor_first_writes(warnings: Vec<Warning>, program: &Program) -> Vec<Warning> {
    warnings
        .into_iter()
        .filter(|w| {
            if w.kind != WarningKind::OwningFieldOverwrite || !w.method.is_ctor() {
                return true;
            }
            let Origin::Field { field, write } = &w.origin else { return true };
            let Some((cname, fname)) = field.split_once('.') else { return true };
            if cname != w.method.class {
                return true;
            }
            let Some(class) = program.class(cname) else { return true };
            let Some(ctor) = w.method.arity.and_then(|a| class.constructor(a)) else { return true };
            !is_first_constructor_write(class, ctor, fname, *write)
        })
        .collect()
}
