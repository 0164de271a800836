//! Promotion of single-assignment private fields to `final`.

use super::{mentions_field, written_from_outside, Edit, EditLog, TransformKind};
use crate::checker::reject_final_writes;
use crate::frontend::*;

fn gate_accepts(program: &Program, class: &str, field: &str) -> bool {
    !reject_final_writes(program).iter().any(|e| e.class == class && e.field == field)
}

/// True if `this` is used other than as the receiver of a field access or call.
pub(super) fn this_escapes(m: &MethodDecl) -> bool {
    let (mut total, mut receivers) = (0, 0);
    walk::block_exprs(&m.body, &mut |e| match &e.kind {
        ExprKind::This => total += 1,
        ExprKind::Field { recv, .. } | ExprKind::Call { recv: Some(recv), .. } if matches!(recv.kind, ExprKind::This) => {
            receivers += 1;
        }
        _ => {}
    });
    total > receivers
}

/// True if `s` calls a method on the enclosing object.
pub(super) fn calls_self(s: &Stmt) -> bool {
    let mut found = false;
    walk::stmt_exprs(s, &mut |e| {
        if let ExprKind::Call { recv, .. } = &e.kind {
            found |= recv.as_ref().is_none_or(|r| matches!(r.kind, ExprKind::This));
        }
    });
    found
}

/// `temp` followed by the last camel-case word of `field`, made unique in `m`.
fn temp_name(class: &ClassDecl, m: &MethodDecl, field: &str) -> String {
    let start = field.char_indices().rev().find(|(_, c)| c.is_uppercase()).map_or(0, |(i, _)| i);
    let word = &field[start..];
    let mut cs = word.chars();
    let base = match cs.next() {
        Some(c) => format!("temp{}{}", c.to_uppercase(), cs.as_str()),
        None => "temp".to_string(),
    };
    let taken = |n: &str| walk::declares(m, n) || class.field(n).is_some();
    if !taken(&base) {
        return base;
    }
    (2..).map(|i| format!("{base}{i}")).find(|n| !taken(n)).unwrap()
}

/// Moves the single write of `field` out of a top-level `try` body: the try
/// assigns a temporary declared before it, and a new `finally` copies the
/// temporary into the field.
fn rewrite_try_write(class: &ClassDecl, ctor: &mut MethodDecl, field: &str, ty: &str) -> bool {
    if walk::declares(ctor, field) || this_escapes(ctor) {
        return false;
    }
    let temp = temp_name(class, ctor, field);
    let Some(t) = ctor.body.stmts.iter().position(|s| mentions_field(s, field)) else { return false };
    let StmtKind::Try { body, catch, finally } = &mut ctor.body.stmts[t].kind else { return false };
    if finally.is_some() {
        return false;
    }
    let Some(w) = body.stmts.iter().position(|s| mentions_field(s, field)) else { return false };
    let StmtKind::Assign { target, value } = &body.stmts[w].kind else { return false };
    if !super::is_field_ref(target, field) || super::is_field_ref(value, field) {
        return false;
    }
    let rest_clean = |s: &Stmt| !mentions_field(s, field) && !calls_self(s);
    if !body.stmts[w + 1..].iter().all(rest_clean) || !catch.as_ref().is_none_or(|c| c.body.stmts.iter().all(rest_clean)) {
        return false;
    }
    let pos = body.stmts[w].pos;
    let original_target = target.clone();
    if let StmtKind::Assign { target, .. } = &mut body.stmts[w].kind {
        *target = Expr::new(ExprKind::Name(temp.clone()), target.pos);
    }
    *finally = Some(Block::new(vec![Stmt::new(StmtKind::Assign { target: original_target, value: Expr::name(&temp) }, pos)]));
    let decl = StmtKind::LocalDecl { ty: ty.to_string(), name: temp, init: Some(Expr::null()) };
    ctor.body.stmts.insert(t, Stmt::new(decl, pos));
    true
}

/// Makes `class.field` final if the compile gate accepts it, rewriting
/// constructors that assign it inside a `try` where needed.
pub(super) fn finalize_one(program: &Program, class: &str, field: &str) -> Option<Program> {
    let decl = program.class(class)?.field(field)?;
    if !decl.modifiers.is_private || decl.modifiers.is_final || written_from_outside(program, field) {
        return None;
    }
    let mut candidate = program.clone();
    let c = candidate.class_mut(class)?;
    c.fields.iter_mut().find(|f| f.name == field)?.modifiers.is_final = true;
    if gate_accepts(&candidate, class, field) {
        return Some(candidate);
    }
    if decl.modifiers.is_static || decl.initializer.is_some() {
        return None;
    }
    let failing: Vec<usize> = reject_final_writes(&candidate)
        .iter()
        .filter(|e| e.class == class && e.field == field)
        .map(|e| e.method.as_ref().filter(|k| k.is_ctor()).and_then(|k| k.arity))
        .collect::<Option<Vec<_>>>()?;
    let c = candidate.class_mut(class)?;
    let snapshot = c.clone();
    for arity in failing {
        let ctor = c.constructors.iter_mut().find(|m| m.params.len() == arity)?;
        if !rewrite_try_write(&snapshot, ctor, field, &decl.ty) {
            return None;
        }
    }
    gate_accepts(&candidate, class, field).then_some(candidate)
}

/// Adds `final` to every private field assigned once on every path, at its
/// declaration or in each constructor.
pub fn finalize_fields(program: &Program) -> (Program, EditLog) {
    let mut p = program.clone();
    let mut log = EditLog::default();
    let targets: Vec<(String, String)> = program.classes.iter().flat_map(|c| c.fields.iter().map(move |f| (c.name.clone(), f.name.clone()))).collect();
    for (class, field) in targets {
        let Some(next) = finalize_one(&p, &class, &field) else { continue };
        let rewritten = next.class(&class).map(|c| &c.constructors) != p.class(&class).map(|c| &c.constructors);
        let description = if rewritten {
            format!("made `{class}.{field}` final, assigning it from a temporary in `finally`")
        } else {
            format!("made `{class}.{field}` final")
        };
        log.entries.push(Edit { kind: TransformKind::FinalizeField, class, member: field, fields: Vec::new(), description });
        p = next;
    }
    number_sites(&mut p);
    (p, log)
}
