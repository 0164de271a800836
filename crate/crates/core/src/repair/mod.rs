//! Leak repair: deciding whether a warning is fixable, choosing a template
//! and materializing it as an AST rewrite plus a unified diff.

mod materialize;

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::checker::{filter::named_writes, must_call_of, Origin, Warning, WarningKind};
use crate::escape::{EscapeAnalysis, Route};
use crate::frontend::*;
use crate::inference::SpecSet;

pub use materialize::{materialize, unified_diff, Patch, PatchStatus, StructuredEdit};

/// Prefix of identifiers the repairer introduces.
pub const FRESH_PREFIX: &str = "__lw_tmp";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Template {
    TryFinallyWrap,
    CloseInFinally,
    PreCloseInsertion,
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum UnfixableReason {
    EscapesToField,
    EscapesReturn,
    EscapesArg,
    /// The pre-close conditions that failed, numbered 1 to 3.
    PreCloseConditionsFail(Vec<u8>),
    NoIrMatch,
}

impl fmt::Display for UnfixableReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnfixableReason::PreCloseConditionsFail(which) => {
                let which: Vec<String> = which.iter().map(u8::to_string).collect();
                write!(f, "PreCloseConditionsFail({})", which.join(","))
            }
            other => fmt::Debug::fmt(other, f),
        }
    }
}

impl UnfixableReason {
    fn of_route(r: &Route) -> Self {
        match r {
            Route::ToField { .. } | Route::StoredInCollection => UnfixableReason::EscapesToField,
            Route::Returned => UnfixableReason::EscapesReturn,
            Route::PassedAsArg { .. } => UnfixableReason::EscapesArg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RepairError {
    #[error("warning {0} matches no allocation, call or write in the program")]
    StaleWarning(String),
    #[error("cannot apply the plan for {warning}: {reason}")]
    MaterializationFailure { warning: String, reason: MaterializationReason },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MaterializationReason {
    /// The anchored statement is no longer where the plan expects it.
    StaleAnchor,
}

impl fmt::Display for MaterializationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// How an inserted pre-close handles an exception from the finalizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum PreCloseStyle {
    /// Catches it and prints a stack trace.
    #[default]
    PrintStackTrace,
    /// Lets it propagate to the caller.
    Propagate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RepairConfig {
    pub preclose_style: PreCloseStyle,
}

/// Statement indices leading from a method body to a nested block: each
/// step is (statement index, index among that statement's child blocks).
pub type BlockPath = Vec<(usize, usize)>;

/// The syntactic position of the leaked value's origin.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Shape {
    /// `T x = origin;`
    Decl,
    /// `x = origin;` for a local `x` declared elsewhere.
    Assign,
    /// `origin;` with the value discarded.
    Discarded,
    /// `f = new ...;`, a field write.
    FieldWrite,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum AnchorOrigin {
    Site(SiteId),
    Call(CallId),
}

/// Where a plan applies. For wraps, statements `start..=end` of the block;
/// for `CloseInFinally`, `start` is the enclosing `try`; for pre-close,
/// `start` is the write.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Anchors {
    pub block: BlockPath,
    pub start: usize,
    pub end: usize,
    pub shape: Shape,
    pub origin: AnchorOrigin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RepairPlan {
    pub warning_id: String,
    pub template: Template,
    pub method: MethodKey,
    pub anchors: Anchors,
    /// A must-call method of the resource class.
    pub finalizer_method: String,
    /// The local closed by a wrap, or the field closed by a pre-close.
    pub variable: String,
    pub var_type: String,
    pub fresh_names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Planned {
    Plan(Box<RepairPlan>),
    Unfixable(UnfixableReason),
}

impl Planned {
    pub fn to_json(&self, warning_id: &str) -> Value {
        match self {
            Planned::Plan(p) => json!({"warningId": warning_id, "template": p.template.to_string()}),
            Planned::Unfixable(r) => json!({"warningId": warning_id, "unfixableReason": r.to_string()}),
        }
    }
}

pub(crate) fn method_decl<'a>(program: &'a Program, key: &MethodKey) -> Option<&'a MethodDecl> {
    let c = program.class(&key.class)?;
    match key.arity {
        Some(n) => c.constructor(n),
        None => c.method(&key.name),
    }
}

pub(crate) fn block_at<'a>(b: &'a Block, path: &[(usize, usize)]) -> Option<&'a Block> {
    match path.split_first() {
        None => Some(b),
        Some((&(i, j), rest)) => block_at(walk::child_blocks(b.stmts.get(i)?).into_iter().nth(j)?, rest),
    }
}

/// The first statement satisfying `pred`, parents before children.
fn find_stmt(b: &Block, pred: &dyn Fn(&Stmt) -> bool) -> Option<(BlockPath, usize)> {
    for (i, s) in b.stmts.iter().enumerate() {
        if pred(s) {
            return Some((Vec::new(), i));
        }
        for (j, c) in walk::child_blocks(s).into_iter().enumerate() {
            if let Some((mut p, k)) = find_stmt(c, pred) {
                p.insert(0, (i, j));
                return Some((p, k));
            }
        }
    }
    None
}

fn is_origin(e: &Expr, origin: &AnchorOrigin) -> bool {
    match (&e.kind, origin) {
        (ExprKind::New { site, .. }, AnchorOrigin::Site(s)) => site == s,
        (ExprKind::Call { call, .. }, AnchorOrigin::Call(c)) => call == c,
        _ => false,
    }
}

/// The shape of `s` if it holds `origin` as a whole right-hand side.
fn shape_of(s: &Stmt, m: &MethodDecl, origin: &AnchorOrigin) -> Option<(Shape, Option<String>)> {
    match &s.kind {
        StmtKind::LocalDecl { name, init: Some(e), .. } if is_origin(e, origin) => Some((Shape::Decl, Some(name.clone()))),
        StmtKind::Assign { target: Expr { kind: ExprKind::Name(x), .. }, value } if is_origin(value, origin) => {
            let local = walk::declares(m, x) && !m.params.iter().any(|p| &p.name == x);
            local.then(|| (Shape::Assign, Some(x.clone())))
        }
        StmtKind::Expr(e) if is_origin(e, origin) => Some((Shape::Discarded, None)),
        _ => None,
    }
}

/// The smallest `__lw_tmpN` that occurs nowhere in `program`, skipping `taken`.
fn fresh_name(program: &Program, taken: &[String]) -> String {
    let text = pretty_print(program);
    (0..).map(|n| format!("{FRESH_PREFIX}{n}")).find(|n| !text.contains(n.as_str()) && !taken.contains(n)).unwrap()
}

fn count_assigns(m: &MethodDecl, x: &str) -> usize {
    let mut n = 0;
    walk::block_stmts(&m.body, &mut |s| {
        if matches!(&s.kind, StmtKind::Assign { target: Expr { kind: ExprKind::Name(t), .. }, .. } if t == x) {
            n += 1;
        }
    });
    n
}

/// Removes statements `range` of the block at `path` and every declaration
/// of `drop_decl`, then reports whether anything still mentions `names`.
fn mentioned_elsewhere(
    m: &MethodDecl,
    path: &[(usize, usize)],
    range: std::ops::RangeInclusive<usize>,
    drop_decl: Option<&str>,
    names: &BTreeSet<String>,
) -> bool {
    let mut body = m.body.clone();
    let Some(b) = block_at_mut(&mut body, path) else { return true };
    b.stmts.drain(range);
    if let Some(x) = drop_decl {
        remove_decls(&mut body, x);
    }
    let mut found = false;
    for s in &body.stmts {
        found |= names.iter().any(|n| walk::stmt_mentions(s, n));
    }
    found
}

fn remove_decls(b: &mut Block, x: &str) {
    b.stmts
        .retain(|s| !matches!(&s.kind, StmtKind::LocalDecl { name, init, .. } if name == x && init.as_ref().is_none_or(|e| matches!(e.kind, ExprKind::Null))));
    for s in &mut b.stmts {
        for c in walk::child_blocks_mut(s) {
            remove_decls(c, x);
        }
    }
}

pub(crate) fn block_at_mut<'a>(b: &'a mut Block, path: &[(usize, usize)]) -> Option<&'a mut Block> {
    match path.split_first() {
        None => Some(b),
        Some((&(i, j), rest)) => block_at_mut(walk::child_blocks_mut(b.stmts.get_mut(i)?).into_iter().nth(j)?, rest),
    }
}

/// The initializer of the declaration of `x`, if one declares it with `null`.
fn declared_null(m: &MethodDecl, x: &str) -> bool {
    let mut ok = false;
    walk::block_stmts(&m.body, &mut |s| {
        if let StmtKind::LocalDecl { name, init: Some(e), .. } = &s.kind {
            ok |= name == x && matches!(e.kind, ExprKind::Null);
        }
    });
    ok
}

/// True if `class.field` may be closed before each overwrite: it is
/// private, every write stores a fresh allocation and no alias of its
/// value escapes the class. Returns the failing conditions, numbered 1 to 3.
pub fn pre_close_eligible(program: &Program, ea: &EscapeAnalysis<'_>, class: &str, field: &str) -> Vec<u8> {
    let mut failed = Vec::new();
    let Some(c) = program.class(class) else { return vec![1, 2, 3] };
    let Some(decl) = c.field(field) else { return vec![1, 2, 3] };
    if !decl.modifiers.is_private {
        failed.push(1);
    }
    let init_ok = decl.initializer.as_ref().is_none_or(|e| matches!(e.kind, ExprKind::New { .. } | ExprKind::Null));
    let mut writes_ok = init_ok;
    for other in &program.classes {
        for m in other.constructors.iter().chain(&other.methods) {
            walk::block_stmts(&m.body, &mut |s| {
                let StmtKind::Assign { target, value } = &s.kind else { return };
                let own = other.name == class && walk::targets_field(m, target, field);
                let foreign = matches!(&target.kind, ExprKind::Field { recv, name } if name == field && !matches!(recv.kind, ExprKind::This));
                if foreign || (own && !matches!(value.kind, ExprKind::New { .. })) {
                    writes_ok = false;
                }
            });
        }
    }
    if !writes_ok {
        failed.push(2);
    }
    if !ea.field_contained(class, field) {
        failed.push(3);
    }
    failed
}

fn finalizer_of(program: &Program, specs: &SpecSet, libspec: &LibrarySpec, class: &str) -> Option<String> {
    must_call_of(class, program, specs, libspec).ok()?.methods.first().cloned()
}

/// Decides how to repair `warning`, which must come from a check of
/// `program` under `specs`.
pub fn plan_fix(warning: &Warning, program: &Program, specs: &SpecSet, libspec: &LibrarySpec, ea: &EscapeAnalysis<'_>) -> Result<Planned, RepairError> {
    let stale = || RepairError::StaleWarning(warning.id.clone());
    let no_match = Ok(Planned::Unfixable(UnfixableReason::NoIrMatch));
    match (&warning.kind, &warning.origin) {
        (WarningKind::OwningFieldOverwrite, Origin::Field { field, write }) => {
            let (class, name) = field.rsplit_once('.').ok_or_else(stale)?;
            plan_pre_close(warning, program, specs, libspec, ea, class, name, *write)
        }
        (WarningKind::UnsatisfiedObligation, Origin::Site { site, .. }) => {
            let escape = ea.escapes_site(&warning.method, *site).ok_or_else(stale)?;
            plan_wrap(warning, program, specs, libspec, AnchorOrigin::Site(*site), escape)
        }
        (WarningKind::UnsatisfiedObligation, Origin::Call { call, .. }) => {
            let escape = ea.escapes_call(&warning.method, *call).ok_or_else(stale)?;
            plan_wrap(warning, program, specs, libspec, AnchorOrigin::Call(*call), escape)
        }
        _ => no_match,
    }
}

#[allow(clippy::too_many_arguments)]
fn plan_pre_close(
    warning: &Warning,
    program: &Program,
    specs: &SpecSet,
    libspec: &LibrarySpec,
    ea: &EscapeAnalysis<'_>,
    class: &str,
    field: &str,
    write: usize,
) -> Result<Planned, RepairError> {
    let stale = || RepairError::StaleWarning(warning.id.clone());
    // The implicit constructor has no statements to anchor a fix to.
    let Some(m) = method_decl(program, &warning.method) else { return Ok(Planned::Unfixable(UnfixableReason::NoIrMatch)) };
    let decl = program.class(class).and_then(|c| c.field(field)).ok_or_else(stale)?;
    let offset = usize::from(m.is_constructor() && decl.initializer.is_some() && !decl.modifiers.is_static);
    let Some(index) = write.checked_sub(offset) else { return Ok(Planned::Unfixable(UnfixableReason::NoIrMatch)) };
    let writes = named_writes(m, field);
    let target = *writes.get(index).ok_or_else(stale)?;
    let StmtKind::Assign { target: lhs, .. } = &target.kind else { return Err(stale()) };
    if !walk::targets_field(m, lhs, field) {
        return Ok(Planned::Unfixable(UnfixableReason::NoIrMatch));
    }
    let failed = pre_close_eligible(program, ea, class, field);
    if !failed.is_empty() {
        return Ok(Planned::Unfixable(UnfixableReason::PreCloseConditionsFail(failed)));
    }
    let Some(finalizer) = finalizer_of(program, specs, libspec, &decl.ty) else {
        return Ok(Planned::Unfixable(UnfixableReason::NoIrMatch));
    };
    let (block, start) = find_stmt(&m.body, &|s| std::ptr::eq(s, target)).ok_or_else(stale)?;
    let mut fresh_names = Vec::new();
    if walk::declares(m, "e") {
        fresh_names.push(fresh_name(program, &[]));
    }
    let stored = match &target.kind {
        StmtKind::Assign { value: Expr { kind: ExprKind::New { site, .. }, .. }, .. } => *site,
        _ => return Ok(Planned::Unfixable(UnfixableReason::NoIrMatch)),
    };
    Ok(Planned::Plan(Box::new(RepairPlan {
        warning_id: warning.id.clone(),
        template: Template::PreCloseInsertion,
        method: warning.method.clone(),
        anchors: Anchors { block, start, end: start, shape: Shape::FieldWrite, origin: AnchorOrigin::Site(stored) },
        finalizer_method: finalizer,
        variable: field.to_string(),
        var_type: decl.ty.clone(),
        fresh_names,
    })))
}

fn plan_wrap(
    warning: &Warning,
    program: &Program,
    specs: &SpecSet,
    libspec: &LibrarySpec,
    origin: AnchorOrigin,
    escape: crate::escape::EscapeResult,
) -> Result<Planned, RepairError> {
    let unfixable = |r| Ok(Planned::Unfixable(r));
    if let Some(r) = escape.routes.first() {
        return unfixable(UnfixableReason::of_route(r));
    }
    let Some(m) = method_decl(program, &warning.method) else { return unfixable(UnfixableReason::NoIrMatch) };
    let Some(finalizer) = finalizer_of(program, specs, libspec, &warning.resource_class) else {
        return unfixable(UnfixableReason::NoIrMatch);
    };
    let Some((block, start)) = find_stmt(&m.body, &|s| shape_of(s, m, &origin).is_some()) else {
        return unfixable(UnfixableReason::NoIrMatch);
    };
    let b = block_at(&m.body, &block).expect("found paths resolve");
    let (shape, var) = shape_of(&b.stmts[start], m, &origin).expect("found statements match");
    let mut fresh_names = Vec::new();
    let (variable, var_type) = match (&shape, var) {
        (Shape::Discarded, _) => {
            let name = fresh_name(program, &[]);
            fresh_names.push(name.clone());
            (name, warning.resource_class.clone())
        }
        (_, Some(x)) => {
            let ty = match &b.stmts[start].kind {
                StmtKind::LocalDecl { ty, .. } => ty.clone(),
                _ => local_type(m, &x).unwrap_or_else(|| warning.resource_class.clone()),
            };
            (x, ty)
        }
        (_, None) => return unfixable(UnfixableReason::NoIrMatch),
    };
    let expected_assigns = usize::from(shape == Shape::Assign);
    if shape != Shape::Discarded && count_assigns(m, &variable) != expected_assigns {
        return unfixable(UnfixableReason::NoIrMatch);
    }
    let mut tracked = escape.tracked_locals.clone();
    tracked.insert(variable.clone());
    let plan = |template, block: BlockPath, start, end, fresh_names| {
        Ok(Planned::Plan(Box::new(RepairPlan {
            warning_id: warning.id.clone(),
            template,
            method: warning.method.clone(),
            anchors: Anchors { block, start, end, shape: shape.clone(), origin: origin.clone() },
            finalizer_method: finalizer.clone(),
            variable: variable.clone(),
            var_type: var_type.clone(),
            fresh_names,
        })))
    };

    if let (Shape::Assign, Some((&(t, 0), outer))) = (&shape, block.split_last()) {
        let enclosing = block_at(&m.body, outer).expect("prefixes of found paths resolve");
        if matches!(enclosing.stmts[t].kind, StmtKind::Try { .. })
            && declared_null(m, &variable)
            && !mentioned_elsewhere(m, outer, t..=t, Some(&variable), &tracked)
        {
            return plan(Template::CloseInFinally, outer.to_vec(), t, t, fresh_names);
        }
    }

    let mut end = start;
    for (i, s) in b.stmts.iter().enumerate().skip(start) {
        if tracked.iter().any(|n| walk::stmt_mentions(s, n)) {
            end = i;
        }
    }
    loop {
        let declared: Vec<&String> = b.stmts[start..=end]
            .iter()
            .filter_map(|s| match &s.kind {
                StmtKind::LocalDecl { name, .. } => Some(name),
                _ => None,
            })
            .collect();
        let last = b.stmts.iter().enumerate().skip(end + 1).filter(|(_, s)| declared.iter().any(|n| walk::stmt_mentions(s, n))).map(|(i, _)| i).next_back();
        match last {
            Some(i) => end = i,
            None => break,
        }
    }
    let drop = (shape == Shape::Assign).then_some(variable.as_str());
    if mentioned_elsewhere(m, &block, start..=end, drop, &tracked) {
        return unfixable(UnfixableReason::NoIrMatch);
    }
    plan(Template::TryFinallyWrap, block, start, end, fresh_names)
}

fn local_type(m: &MethodDecl, x: &str) -> Option<String> {
    let mut ty = None;
    walk::block_stmts(&m.body, &mut |s| {
        if let StmtKind::LocalDecl { ty: t, name, .. } = &s.kind {
            if name == x {
                ty = Some(t.clone());
            }
        }
    });
    ty
}

#[cfg(test)]
mod tests;
