//! Traversals over statements and expressions, in print order.
//! Expressions are visited children-first.

use super::ast::*;

pub fn expr<F: FnMut(&Expr)>(e: &Expr, f: &mut F) {
    match &e.kind {
        ExprKind::New { args, .. } => args.iter().for_each(|a| expr(a, f)),
        ExprKind::Call { recv, args, .. } => {
            if let Some(r) = recv {
                expr(r, f);
            }
            args.iter().for_each(|a| expr(a, f));
        }
        ExprKind::Field { recv, .. } => expr(recv, f),
        ExprKind::Binary { lhs, rhs, .. } => {
            expr(lhs, f);
            expr(rhs, f);
        }
        ExprKind::Name(_) | ExprKind::This | ExprKind::Null | ExprKind::Int(_) | ExprKind::Str(_) => {}
    }
    f(e);
}

pub fn expr_mut<F: FnMut(&mut Expr)>(e: &mut Expr, f: &mut F) {
    match &mut e.kind {
        ExprKind::New { args, .. } => args.iter_mut().for_each(|a| expr_mut(a, f)),
        ExprKind::Call { recv, args, .. } => {
            if let Some(r) = recv {
                expr_mut(r, f);
            }
            args.iter_mut().for_each(|a| expr_mut(a, f));
        }
        ExprKind::Field { recv, .. } => expr_mut(recv, f),
        ExprKind::Binary { lhs, rhs, .. } => {
            expr_mut(lhs, f);
            expr_mut(rhs, f);
        }
        ExprKind::Name(_) | ExprKind::This | ExprKind::Null | ExprKind::Int(_) | ExprKind::Str(_) => {}
    }
    f(e);
}

/// Every expression in `s`, including those in nested blocks.
pub fn stmt_exprs<F: FnMut(&Expr)>(s: &Stmt, f: &mut F) {
    match &s.kind {
        StmtKind::LocalDecl { init, .. } => {
            if let Some(e) = init {
                expr(e, f);
            }
        }
        StmtKind::Assign { target, value } => {
            expr(target, f);
            expr(value, f);
        }
        StmtKind::Expr(e) => expr(e, f),
        StmtKind::If { cond, then_block, else_block } => {
            expr(cond, f);
            block_exprs(then_block, f);
            if let Some(b) = else_block {
                block_exprs(b, f);
            }
        }
        StmtKind::While { cond, body } => {
            expr(cond, f);
            block_exprs(body, f);
        }
        StmtKind::Try { body, catch, finally } => {
            block_exprs(body, f);
            if let Some(c) = catch {
                block_exprs(&c.body, f);
            }
            if let Some(b) = finally {
                block_exprs(b, f);
            }
        }
        StmtKind::Return(v) => {
            if let Some(e) = v {
                expr(e, f);
            }
        }
    }
}

pub fn block_exprs<F: FnMut(&Expr)>(b: &Block, f: &mut F) {
    for s in &b.stmts {
        stmt_exprs(s, f);
    }
}

pub fn stmt_exprs_mut<F: FnMut(&mut Expr)>(s: &mut Stmt, f: &mut F) {
    match &mut s.kind {
        StmtKind::LocalDecl { init, .. } => {
            if let Some(e) = init {
                expr_mut(e, f);
            }
        }
        StmtKind::Assign { target, value } => {
            expr_mut(target, f);
            expr_mut(value, f);
        }
        StmtKind::Expr(e) => expr_mut(e, f),
        StmtKind::If { cond, then_block, else_block } => {
            expr_mut(cond, f);
            block_exprs_mut(then_block, f);
            if let Some(b) = else_block {
                block_exprs_mut(b, f);
            }
        }
        StmtKind::While { cond, body } => {
            expr_mut(cond, f);
            block_exprs_mut(body, f);
        }
        StmtKind::Try { body, catch, finally } => {
            block_exprs_mut(body, f);
            if let Some(c) = catch {
                block_exprs_mut(&mut c.body, f);
            }
            if let Some(b) = finally {
                block_exprs_mut(b, f);
            }
        }
        StmtKind::Return(v) => {
            if let Some(e) = v {
                expr_mut(e, f);
            }
        }
    }
}

pub fn block_exprs_mut<F: FnMut(&mut Expr)>(b: &mut Block, f: &mut F) {
    for s in &mut b.stmts {
        stmt_exprs_mut(s, f);
    }
}

/// Every statement in `b`, parents before children.
pub fn block_stmts<'a, F: FnMut(&'a Stmt)>(b: &'a Block, f: &mut F) {
    for s in &b.stmts {
        stmt_tree(s, f);
    }
}

pub fn stmt_tree<'a, F: FnMut(&'a Stmt)>(s: &'a Stmt, f: &mut F) {
    f(s);
    for child in child_blocks(s) {
        block_stmts(child, f);
    }
}

/// Nested blocks of a statement in print order.
pub fn child_blocks(s: &Stmt) -> Vec<&Block> {
    match &s.kind {
        StmtKind::If { then_block, else_block, .. } => {
            let mut v = vec![then_block];
            v.extend(else_block.iter());
            v
        }
        StmtKind::While { body, .. } => vec![body],
        StmtKind::Try { body, catch, finally } => {
            let mut v = vec![body];
            v.extend(catch.iter().map(|c| &c.body));
            v.extend(finally.iter());
            v
        }
        _ => Vec::new(),
    }
}

pub fn child_blocks_mut(s: &mut Stmt) -> Vec<&mut Block> {
    match &mut s.kind {
        StmtKind::If { then_block, else_block, .. } => {
            let mut v = vec![then_block];
            v.extend(else_block.iter_mut());
            v
        }
        StmtKind::While { body, .. } => vec![body],
        StmtKind::Try { body, catch, finally } => {
            let mut v = vec![body];
            v.extend(catch.iter_mut().map(|c| &mut c.body));
            v.extend(finally.iter_mut());
            v
        }
        _ => Vec::new(),
    }
}

/// True if `name` occurs as a bare identifier anywhere in the statement.
pub fn stmt_mentions(s: &Stmt, name: &str) -> bool {
    let mut found = false;
    stmt_exprs(s, &mut |e| {
        if matches!(&e.kind, ExprKind::Name(n) if n == name) {
            found = true;
        }
    });
    if !found {
        block_stmts_decl(s, name, &mut found);
    }
    found
}

fn block_stmts_decl(s: &Stmt, name: &str, found: &mut bool) {
    stmt_tree(s, &mut |st| match &st.kind {
        StmtKind::LocalDecl { name: n, .. } if n == name => *found = true,
        StmtKind::Try { catch: Some(c), .. } if c.name == name => *found = true,
        _ => {}
    });
}

/// True if `e` contains a method call.
pub fn has_call(e: &Expr) -> bool {
    let mut found = false;
    expr(e, &mut |x| {
        if matches!(x.kind, ExprKind::Call { .. }) {
            found = true;
        }
    });
    found
}

/// True if `m` declares `name` as a parameter, local or catch variable.
pub fn declares(m: &MethodDecl, name: &str) -> bool {
    m.params.iter().any(|p| p.name == name)
        || m.body.stmts.iter().any(|s| {
            let mut found = false;
            block_stmts_decl(s, name, &mut found);
            found
        })
}

/// True if `target` denotes field `field` of the enclosing object in `m`:
/// `this.field`, or a bare `field` no local shadows.
pub fn targets_field(m: &MethodDecl, target: &Expr, field: &str) -> bool {
    match &target.kind {
        ExprKind::Field { recv, name } => name == field && matches!(recv.kind, ExprKind::This),
        ExprKind::Name(n) => n == field && !declares(m, field),
        _ => false,
    }
}
