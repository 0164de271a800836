//! Demotion of fields used by a single method to locals of that method.

use super::finalize::{calls_self, this_escapes};
use super::{accessed_from_outside, is_field_ref, mentions_field, Edit, EditLog, TransformKind};
use crate::frontend::*;

/// Index path to the statement that first mentions `field`, descending only
/// into `try` bodies, provided it is an assignment of the field and every
/// other mention follows it in the same block.
fn defining_path(b: &Block, field: &str) -> Option<Vec<usize>> {
    let k = b.stmts.iter().position(|s| mentions_field(s, field))?;
    match &b.stmts[k].kind {
        StmtKind::Assign { target, value } if is_field_ref(target, field) => {
            let mut reads_self = false;
            walk::expr(value, &mut |e| reads_self |= is_field_ref(e, field));
            (!reads_self).then(|| vec![k])
        }
        StmtKind::Try { body, catch, finally } => {
            let handlers_clean = catch.as_ref().is_none_or(|c| !c.body.stmts.iter().any(|s| mentions_field(s, field)))
                && finally.as_ref().is_none_or(|f| !f.stmts.iter().any(|s| mentions_field(s, field)));
            if !handlers_clean || b.stmts[k + 1..].iter().any(|s| mentions_field(s, field)) {
                return None;
            }
            let mut path = vec![k];
            path.extend(defining_path(body, field)?);
            Some(path)
        }
        _ => None,
    }
}

fn block_at<'a>(b: &'a mut Block, path: &[usize]) -> &'a mut Block {
    match path.split_first() {
        None => b,
        Some((&i, rest)) => match &mut b.stmts[i].kind {
            StmtKind::Try { body, .. } => block_at(body, rest),
            _ => unreachable!("defining paths descend through try bodies only"),
        },
    }
}

/// Replaces `this.field` with a bare `field`.
fn unqualify(s: &mut Stmt, field: &str) {
    walk::stmt_exprs_mut(s, &mut |e| {
        if matches!(&e.kind, ExprKind::Field { recv, name } if name == field && matches!(recv.kind, ExprKind::This)) {
            e.kind = ExprKind::Name(field.to_string());
        }
    });
}

/// Turns `class.field` into a local of the one method that uses it.
pub(super) fn demote_one(program: &Program, class: &str, field: &str) -> Option<Program> {
    let c = program.class(class)?;
    let decl = c.field(field)?;
    if !decl.modifiers.is_private || decl.modifiers.is_static || decl.initializer.is_some() {
        return None;
    }
    if accessed_from_outside(program, field)
        || c.fields.iter().any(|f| {
            f.initializer.as_ref().is_some_and(|e| {
                let mut found = false;
                walk::expr(e, &mut |x| found |= is_field_ref(x, field));
                found
            })
        })
    {
        return None;
    }
    let users: Vec<usize> =
        c.constructors.iter().chain(&c.methods).enumerate().filter(|(_, m)| m.body.stmts.iter().any(|s| mentions_field(s, field))).map(|(i, _)| i).collect();
    let [user] = users[..] else { return None };
    let m = c.constructors.iter().chain(&c.methods).nth(user)?;
    if m.is_static || walk::declares(m, field) || this_escapes(m) {
        return None;
    }
    let path = defining_path(&m.body, field)?;
    let (last, outer) = path.split_last()?;
    let mut p = program.clone();
    let c = p.class_mut(class)?;
    let ty = decl.ty.clone();
    c.fields.retain(|f| f.name != field);
    let n_ctors = c.constructors.len();
    let m = if user < n_ctors { &mut c.constructors[user] } else { &mut c.methods[user - n_ctors] };
    let name = m.name.clone();
    let b = block_at(&mut m.body, outer);
    if b.stmts[last + 1..].iter().any(|s| calls_self(s) || calls_named(s, &name)) {
        return None;
    }
    let StmtKind::Assign { value, .. } = b.stmts[*last].kind.clone() else { return None };
    b.stmts[*last].kind = StmtKind::LocalDecl { ty, name: field.to_string(), init: Some(value) };
    for s in &mut b.stmts[last + 1..] {
        unqualify(s, field);
    }
    Some(p)
}

fn calls_named(s: &Stmt, method: &str) -> bool {
    let mut found = false;
    walk::stmt_exprs(s, &mut |e| found |= matches!(&e.kind, ExprKind::Call { method: m, .. } if m == method));
    found
}

/// Converts each private field that only one method touches, and that the
/// method assigns unconditionally before any read, into a local declared at
/// that assignment.
pub fn field_to_local(program: &Program) -> (Program, EditLog) {
    let mut p = program.clone();
    let mut log = EditLog::default();
    let targets: Vec<(String, String)> = program.classes.iter().flat_map(|c| c.fields.iter().map(move |f| (c.name.clone(), f.name.clone()))).collect();
    for (class, field) in targets {
        let Some(next) = demote_one(&p, &class, &field) else { continue };
        let description = format!("turned `{class}.{field}` into a local variable");
        log.entries.push(Edit { kind: TransformKind::FieldToLocal, class, member: field, fields: Vec::new(), description });
        p = next;
    }
    number_sites(&mut p);
    (p, log)
}
