//! Injection of a `close` method into classes that allocate a resource in a
//! constructor, keep it in a field, and never dispose of it.

use std::collections::BTreeMap;

use super::{is_field_ref, Edit, EditLog, TransformKind};
use crate::checker::{Origin, Warning, WarningKind};
use crate::frontend::*;
use crate::inference::SpecSet;

const FINALIZER: &str = "close";
const INTERFACE: &str = "AutoCloseable";

fn is_new_at(e: &Expr, site: SiteId) -> bool {
    matches!(&e.kind, ExprKind::New { site: s, .. } if *s == site)
}

/// The field of the constructed object that receives the allocation at
/// `site`, directly or through one local.
fn receiving_field(ctor: &MethodDecl, site: SiteId) -> Option<String> {
    let mut direct = None;
    let mut local = None;
    walk::block_stmts(&ctor.body, &mut |s| match &s.kind {
        StmtKind::Assign { target, value } if is_new_at(value, site) => match &target.kind {
            ExprKind::Name(n) if walk::declares(ctor, n) => local = Some(n.clone()),
            _ => {
                direct = match &target.kind {
                    ExprKind::Name(n) | ExprKind::Field { name: n, .. } if walk::targets_field(ctor, target, n) => Some(n.clone()),
                    _ => None,
                }
            }
        },
        StmtKind::LocalDecl { name, init: Some(e), .. } if is_new_at(e, site) => local = Some(name.clone()),
        _ => {}
    });
    if direct.is_some() {
        return direct;
    }
    let local = local?;
    let mut found = None;
    walk::block_stmts(&ctor.body, &mut |s| {
        if let StmtKind::Assign { target, value } = &s.kind {
            if matches!(&value.kind, ExprKind::Name(n) if *n == local) {
                if let ExprKind::Name(n) | ExprKind::Field { name: n, .. } = &target.kind {
                    if walk::targets_field(ctor, target, n) {
                        found = Some(n.clone());
                    }
                }
            }
        }
    });
    found
}

/// True if some method calls one of `methods` on `field`.
fn disposes(class: &ClassDecl, field: &str, methods: &[String]) -> bool {
    class.constructors.iter().chain(&class.methods).any(|m| {
        let mut found = false;
        walk::block_exprs(&m.body, &mut |e| {
            if let ExprKind::Call { recv: Some(r), method, .. } = &e.kind {
                found |= methods.contains(method) && is_field_ref(r, field) && !walk::declares(m, field);
            }
        });
        found
    })
}

/// True if every constructor assigns `field` a fresh object before anything
/// can return.
fn definitely_assigned(class: &ClassDecl, field: &str) -> bool {
    !class.constructors.is_empty()
        && class.constructors.iter().all(|m| {
            for s in &m.body.stmts {
                match &s.kind {
                    StmtKind::Assign { target, value } if walk::targets_field(m, target, field) => {
                        return matches!(value.kind, ExprKind::New { .. });
                    }
                    StmtKind::Return(_) => return false,
                    _ if super::mentions_field(s, field) => return false,
                    _ => {}
                }
                let mut returns = false;
                walk::stmt_tree(s, &mut |x| returns |= matches!(x.kind, StmtKind::Return(_)));
                if returns {
                    return false;
                }
            }
            false
        })
}

pub(super) fn must_calls(program: &Program, lib: &LibrarySpec, class: &str, fields: &[String]) -> Vec<Vec<String>> {
    let Some(c) = program.class(class) else { return Vec::new() };
    let specs = SpecSet::declared(program);
    fields
        .iter()
        .map(|f| {
            let ty = c.field(f).map(|d| d.ty.as_str()).unwrap_or("");
            match lib.class(ty) {
                Some(l) => l.must_call.clone(),
                None => specs.class_must_call(ty).map(<[String]>::to_vec).unwrap_or_default(),
            }
        })
        .collect()
}

/// Adds `implements AutoCloseable` and a `close` method calling `methods[i]`
/// on `fields[i]`, in field-declaration order.
pub(super) fn inject_one(program: &Program, class: &str, fields: &[String], methods: &[Vec<String>]) -> Option<Program> {
    let mut p = program.clone();
    let c = p.class_mut(class)?;
    if c.method(FINALIZER).is_some() || c.implements.as_deref().is_some_and(|i| i != INTERFACE) {
        return None;
    }
    let mut order: Vec<(usize, &String, &Vec<String>)> =
        fields.iter().zip(methods).filter_map(|(f, ms)| Some((c.fields.iter().position(|d| &d.name == f)?, f, ms))).collect();
    order.sort();
    let pos = c.pos;
    let mut body = Vec::new();
    for (_, field, ms) in order {
        let calls: Vec<Stmt> = ms
            .iter()
            .map(|m| {
                let call = ExprKind::Call { recv: Some(Box::new(Expr::name(field))), method: m.clone(), args: Vec::new(), call: CallId(0) };
                Stmt::new(StmtKind::Expr(Expr::new(call, pos)), pos)
            })
            .collect();
        if definitely_assigned(c, field) {
            body.extend(calls);
        } else {
            let cond = ExprKind::Binary { op: BinOp::Ne, lhs: Box::new(Expr::name(field)), rhs: Box::new(Expr::null()) };
            body.push(Stmt::new(StmtKind::If { cond: Expr::new(cond, pos), then_block: Block::new(calls), else_block: None }, pos));
        }
    }
    c.implements = Some(INTERFACE.to_string());
    c.methods.push(MethodDecl {
        name: FINALIZER.to_string(),
        visibility: Visibility::Public,
        is_static: false,
        params: Vec::new(),
        return_type: None,
        body: Block::new(body),
        annotations: Vec::new(),
        pos,
    });
    Some(p)
}

/// For each constructor allocation flagged by `warnings` whose value lands
/// in a private field of the constructed object, gives the class a `close`
/// method disposing of those fields, unless some method already disposes
/// of them or a `close` exists.
pub fn inject_finalizers(program: &Program, warnings: &[Warning], libspec: &LibrarySpec) -> (Program, EditLog) {
    let specs = SpecSet::declared(program);
    let mut wanted: BTreeMap<String, Vec<(String, Vec<String>)>> = BTreeMap::new();
    for w in warnings {
        let (WarningKind::UnsatisfiedObligation, Origin::Site { site, .. }, Some(arity)) = (w.kind, &w.origin, w.method.arity) else {
            continue;
        };
        let Some(class) = program.class(&w.method.class) else { continue };
        let Some(ctor) = class.constructor(arity) else { continue };
        let Some(field) = receiving_field(ctor, *site) else { continue };
        let Some(decl) = class.field(&field) else { continue };
        if !decl.modifiers.is_private || decl.modifiers.is_static {
            continue;
        }
        let must: Vec<String> = match libspec.class(&decl.ty) {
            Some(l) => l.must_call.clone(),
            None => specs.class_must_call(&decl.ty).map(<[String]>::to_vec).unwrap_or_default(),
        };
        if must.is_empty() || disposes(class, &field, &must) {
            continue;
        }
        let entry = wanted.entry(class.name.clone()).or_default();
        if !entry.iter().any(|(f, _)| *f == field) {
            entry.push((field, must));
        }
    }
    let mut p = program.clone();
    let mut log = EditLog::default();
    for (class, entries) in wanted {
        let (fields, methods): (Vec<String>, Vec<Vec<String>>) = entries.into_iter().unzip();
        let Some(next) = inject_one(&p, &class, &fields, &methods) else { continue };
        let description = format!("added `{INTERFACE}` and `{FINALIZER}()` to `{class}` disposing {}", fields.join(", "));
        log.entries.push(Edit { kind: TransformKind::InjectFinalizer, class, member: FINALIZER.to_string(), fields, description });
        p = next;
    }
    number_sites(&mut p);
    (p, log)
}
