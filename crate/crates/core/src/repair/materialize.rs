//! Applying a repair plan to a private copy of the program.

use diffy::DiffOptions;
use serde::Serialize;
use serde_json::{json, Value};

use super::*;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum PatchStatus {
    Materialized,
    Unfixable(UnfixableReason),
}

/// One AST edit, recorded with the printed code it introduces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StructuredEdit {
    pub method: String,
    pub template: Template,
    /// Line of the anchored statement in the unpatched program.
    pub line: u32,
    pub inserted: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Patch {
    pub file: String,
    pub warning_id: String,
    /// Unified diff from the original text to `new_text`.
    pub diff: String,
    pub structured_edits: Vec<StructuredEdit>,
    /// The pretty-printed patched program.
    pub new_text: String,
    pub status: PatchStatus,
}

impl Patch {
    pub fn unfixable(file: &str, warning_id: &str, reason: UnfixableReason) -> Self {
        Patch {
            file: file.to_string(),
            warning_id: warning_id.to_string(),
            diff: String::new(),
            structured_edits: Vec::new(),
            new_text: String::new(),
            status: PatchStatus::Unfixable(reason),
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "file": self.file,
            "warningId": self.warning_id,
            "status": match &self.status {
                PatchStatus::Materialized => "Materialized".to_string(),
                PatchStatus::Unfixable(r) => format!("Unfixable({r})"),
            },
            "edits": self.structured_edits,
        })
    }
}

/// A unified diff between two versions of `file`.
pub fn unified_diff(file: &str, original: &str, modified: &str) -> String {
    DiffOptions::new().set_original_filename(format!("a/{file}")).set_modified_filename(format!("b/{file}")).create_patch(original, modified).to_string()
}

fn name(x: &str, pos: Pos) -> Expr {
    Expr::new(ExprKind::Name(x.to_string()), pos)
}

fn call_stmt(recv: Expr, method: &str, pos: Pos) -> Stmt {
    let call = ExprKind::Call { recv: Some(Box::new(recv)), method: method.to_string(), args: Vec::new(), call: CallId(0) };
    Stmt::new(StmtKind::Expr(Expr::new(call, pos)), pos)
}

/// `if (target != null) { body }`
fn null_guard(target: Expr, body: Vec<Stmt>, pos: Pos) -> Stmt {
    let cond = ExprKind::Binary { op: BinOp::Ne, lhs: Box::new(target), rhs: Box::new(Expr::new(ExprKind::Null, pos)) };
    Stmt::new(StmtKind::If { cond: Expr::new(cond, pos), then_block: Block::new(body), else_block: None }, pos)
}

fn printed(stmts: &[Stmt]) -> String {
    let mut out = String::new();
    for s in stmts {
        printer::print_stmt(&mut out, s, 0);
    }
    out
}

fn stale(plan: &RepairPlan) -> RepairError {
    RepairError::MaterializationFailure { warning: plan.warning_id.clone(), reason: MaterializationReason::StaleAnchor }
}

fn method_mut<'a>(program: &'a mut Program, key: &MethodKey) -> Option<&'a mut MethodDecl> {
    let c = program.class_mut(&key.class)?;
    match key.arity {
        Some(n) => c.constructors.iter_mut().find(|m| m.params.len() == n),
        None => c.methods.iter_mut().find(|m| m.name == key.name),
    }
}

/// Applies `plan` to a copy of `program`. `original_text` is the source the
/// diff is computed against; the patched text is the pretty-printed result.
pub fn materialize(program: &Program, original_text: &str, plan: &RepairPlan, config: &RepairConfig) -> Result<(Program, Patch), RepairError> {
    let mut p = program.clone();
    let m = method_mut(&mut p, &plan.method).ok_or_else(|| stale(plan))?;
    let (line, inserted) = match plan.template {
        Template::TryFinallyWrap => wrap(m, plan).ok_or_else(|| stale(plan))?,
        Template::CloseInFinally => close_in_finally(m, plan).ok_or_else(|| stale(plan))?,
        Template::PreCloseInsertion => pre_close(m, plan, config.preclose_style).ok_or_else(|| stale(plan))?,
    };
    number_sites(&mut p);
    let new_text = pretty_print(&p);
    let edit = StructuredEdit { method: plan.method.to_string(), template: plan.template, line, inserted };
    let patch = Patch {
        file: program.source_name.clone(),
        warning_id: plan.warning_id.clone(),
        diff: unified_diff(&program.source_name, original_text, &new_text),
        structured_edits: vec![edit],
        new_text,
        status: PatchStatus::Materialized,
    };
    Ok((p, patch))
}

/// `T x = null; try { x = origin; ...uses } finally { if (x != null) { x.fin(); } }`
fn wrap(m: &mut MethodDecl, plan: &RepairPlan) -> Option<(u32, String)> {
    let a = &plan.anchors;
    let x = plan.variable.as_str();
    if a.shape == Shape::Assign {
        let mut has_decl = false;
        walk::block_stmts(&m.body, &mut |s| has_decl |= matches!(&s.kind, StmtKind::LocalDecl { name, .. } if name == x));
        if !has_decl {
            return None;
        }
    }
    let snapshot = m.clone();
    let b = block_at_mut(&mut m.body, &a.block)?;
    if a.end >= b.stmts.len() || shape_of(&b.stmts[a.start], &snapshot, &a.origin).map(|s| s.0) != Some(a.shape.clone()) {
        return None;
    }
    let mut moved: Vec<Stmt> = b.stmts.drain(a.start..=a.end).collect();
    let first = &mut moved[0];
    let pos = first.pos;
    let line = pos.line;
    let mut prefix = Vec::new();
    let value = match &mut first.kind {
        StmtKind::LocalDecl { init, .. } => init.take(),
        StmtKind::Assign { value, .. } => Some(value.clone()),
        StmtKind::Expr(e) => Some(e.clone()),
        _ => None,
    }?;
    if a.shape != Shape::Assign {
        let decl = StmtKind::LocalDecl { ty: plan.var_type.clone(), name: x.to_string(), init: Some(Expr::new(ExprKind::Null, pos)) };
        prefix.push(Stmt::new(decl, pos));
    }
    moved[0] = Stmt::new(StmtKind::Assign { target: name(x, pos), value }, pos);
    let guard = null_guard(name(x, pos), vec![call_stmt(name(x, pos), &plan.finalizer_method, pos)], pos);
    prefix.push(Stmt::new(StmtKind::Try { body: Block::new(moved), catch: None, finally: Some(Block::new(vec![guard])) }, pos));
    let inserted = printed(&prefix);
    b.stmts.splice(a.start..a.start, prefix);
    if a.shape == Shape::Assign {
        initialize_decl(&mut m.body, x);
    }
    Some((line, inserted))
}

/// Gives an uninitialized declaration of `x` a `null` initializer, so the
/// guard in `finally` reads a definitely assigned local.
fn initialize_decl(b: &mut Block, x: &str) {
    for s in &mut b.stmts {
        if let StmtKind::LocalDecl { name, init: init @ None, .. } = &mut s.kind {
            if name == x {
                *init = Some(Expr::new(ExprKind::Null, s.pos));
            }
        }
        for c in walk::child_blocks_mut(s) {
            initialize_decl(c, x);
        }
    }
}

fn close_in_finally(m: &mut MethodDecl, plan: &RepairPlan) -> Option<(u32, String)> {
    let a = &plan.anchors;
    let snapshot = m.clone();
    let b = block_at_mut(&mut m.body, &a.block)?;
    let t = b.stmts.get_mut(a.start)?;
    let pos = t.pos;
    let StmtKind::Try { body, finally, .. } = &mut t.kind else { return None };
    if !body.stmts.iter().any(|s| shape_of(s, &snapshot, &a.origin).is_some()) {
        return None;
    }
    let x = plan.variable.as_str();
    let guard = null_guard(name(x, pos), vec![call_stmt(name(x, pos), &plan.finalizer_method, pos)], pos);
    let inserted = printed(std::slice::from_ref(&guard));
    if finally.as_ref().and_then(|f| f.stmts.last()).is_some_and(|s| printed(std::slice::from_ref(s)) == inserted) {
        return None;
    }
    finally.get_or_insert_with(Block::default).stmts.push(guard);
    Some((pos.line, inserted))
}

fn pre_close(m: &mut MethodDecl, plan: &RepairPlan, style: PreCloseStyle) -> Option<(u32, String)> {
    let a = &plan.anchors;
    let snapshot = m.clone();
    let b = block_at_mut(&mut m.body, &a.block)?;
    let w = b.stmts.get(a.start)?;
    let StmtKind::Assign { target, value } = &w.kind else { return None };
    if !walk::targets_field(&snapshot, target, &plan.variable) || !is_origin(value, &a.origin) {
        return None;
    }
    let pos = w.pos;
    let field = target.clone();
    let close = call_stmt(field.clone(), &plan.finalizer_method, pos);
    let body = match style {
        PreCloseStyle::Propagate => vec![close],
        PreCloseStyle::PrintStackTrace => {
            let e = plan.fresh_names.first().map_or("e", String::as_str);
            let report = call_stmt(name(e, pos), "printStackTrace", pos);
            let catch = CatchClause { ty: "Exception".to_string(), name: e.to_string(), body: Block::new(vec![report]) };
            vec![Stmt::new(StmtKind::Try { body: Block::new(vec![close]), catch: Some(catch), finally: None }, pos)]
        }
    };
    let guard = null_guard(field, body, pos);
    let inserted = printed(std::slice::from_ref(&guard));
    b.stmts.insert(a.start, guard);
    Some((pos.line, inserted))
}
