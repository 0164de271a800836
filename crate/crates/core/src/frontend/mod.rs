//! MiniJ grammar, parser, printer and library specifications.

pub mod ast;
pub mod lexer;
pub mod libspec;
pub mod parser;
pub mod printer;
pub mod resolve;
pub mod walk;

use thiserror::Error;

pub use ast::*;
pub use libspec::{default_library_spec, load_library_spec, LibMethod, LibrarySpec, ParamMode, ReturnMode};
pub use parser::{parse, parse_expr};
pub use printer::pretty_print;
pub use resolve::{Resolved, Scopes, TypeCtx};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax { line: u32, col: u32, message: String },
    #[error("duplicate name `{name}` at {line}:{col}")]
    DuplicateName { name: String, line: u32, col: u32 },
    #[error("library spec error at {line}:{col}: {message}")]
    SpecFormat { line: u32, col: u32, message: String },
    #[error("must_call of `{class}` names undeclared method `{method}`")]
    UnknownMethodInMustCall { class: String, method: String },
}

impl FrontendError {
    pub(crate) fn syntax(pos: Pos, message: impl Into<String>) -> Self {
        FrontendError::Syntax { line: pos.line, col: pos.col, message: message.into() }
    }
}

/// Renumbers allocation sites and call ids in canonical order: classes in
/// order, then field initializers, constructors, methods; expressions
/// children-first. Printing and re-parsing preserves the numbering.
pub fn number_sites(program: &mut Program) {
    let (mut sites, mut calls) = (0u32, 0u32);
    let mut number = |e: &mut Expr| match &mut e.kind {
        ExprKind::New { site, .. } => {
            *site = SiteId(sites);
            sites += 1;
        }
        ExprKind::Call { call, .. } => {
            *call = CallId(calls);
            calls += 1;
        }
        _ => {}
    };
    for c in &mut program.classes {
        for f in &mut c.fields {
            if let Some(init) = &mut f.initializer {
                walk::expr_mut(init, &mut number);
            }
        }
        for m in c.constructors.iter_mut().chain(c.methods.iter_mut()) {
            walk::block_exprs_mut(&mut m.body, &mut number);
        }
    }
}

/// Parses, prints and re-parses, yielding the canonical form of a program
/// with positions that match its printed text.
pub fn normalize(program: &Program) -> Program {
    parse(&program.source_name, &pretty_print(program)).expect("printed programs re-parse")
}
