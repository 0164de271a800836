//! An interpreter for MiniJ that tracks the lifecycle of every library
//! resource, used as ground truth for leaks and as the dynamic patch gate.

mod interp;
mod validate;

use std::collections::BTreeSet;

use serde_json::{json, Value};
use thiserror::Error;

use crate::checker::{Origin, Warning};
use crate::frontend::{CallId, LibrarySpec, MethodKey, Program, SiteId};

pub use validate::{validate_patch, ValidationFailure, ValidationVerdict};

pub const DEFAULT_STEP_LIMIT: u64 = 100_000;

/// Prefix of the stdout event a must-call invocation emits.
pub const CLOSE_EVENT: &str = "close:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuntimeErrorKind {
    NullDereference,
    NoSuchMethod,
    TypeError,
    StepLimitExceeded,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum RunStatus {
    #[default]
    Completed,
    RuntimeError(RuntimeErrorKind),
}

impl RunStatus {
    pub fn hit_step_limit(&self) -> bool {
        *self == RunStatus::RuntimeError(RuntimeErrorKind::StepLimitExceeded)
    }
}

/// How a value came to be where it leaked: the static facts a checker
/// warning can point at.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Attribution {
    /// Stored, directly or transitively, inside the object allocated at a site.
    Site(SiteId),
    /// Returned from a user method call.
    Call(CallId),
    /// Passed as argument `i` of a user method.
    Param(MethodKey, usize),
    /// Overwritten in field `C.f` while still open.
    Overwrite(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeakedResource {
    /// Heap index, in allocation order.
    pub object: usize,
    pub site: SiteId,
    pub class: String,
    pub tags: BTreeSet<Attribution>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UseAfterClose {
    /// Site of the closed resource that was used.
    pub site: SiteId,
    pub method: String,
    pub step: u64,
}

/// A value read from field `class.field` that was stored somewhere that can
/// outlive the reading object.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldEscape {
    pub class: String,
    pub field: String,
    /// Class of the object the value was stored into.
    pub target: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RuntimeReport {
    /// Sorted; one entry per leaked object.
    pub leaked_sites: Vec<SiteId>,
    pub leaks: Vec<LeakedResource>,
    pub use_after_close: Vec<UseAfterClose>,
    pub stdout: Vec<String>,
    pub status: RunStatus,
    pub steps: u64,
    pub field_escapes: Vec<FieldEscape>,
}

impl RuntimeReport {
    /// Output with close events removed.
    pub fn observable_output(&self) -> Vec<&str> {
        self.stdout.iter().filter(|l| !l.starts_with(CLOSE_EVENT)).map(String::as_str).collect()
    }

    pub fn to_json(&self) -> Value {
        let status = match &self.status {
            RunStatus::Completed => "completed".to_string(),
            RunStatus::RuntimeError(k) => format!("{k:?}"),
        };
        json!({
            "leaked": self.leaked_sites.iter().map(|s| s.0).collect::<Vec<_>>(),
            "useAfterClose": self.use_after_close.iter().map(|u| json!({
                "site": u.site.0, "method": u.method, "step": u.step,
            })).collect::<Vec<_>>(),
            "status": status,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("program has no unique static main method")]
    NoMain,
    #[error("step limit must be positive")]
    ZeroStepLimit,
}

/// Interprets the static `main` of `program`.
pub fn run(program: &Program, libspec: &LibrarySpec, step_limit: u64) -> Result<RuntimeReport, OracleError> {
    if step_limit == 0 {
        return Err(OracleError::ZeroStepLimit);
    }
    let (class, main) = program.main_method().ok_or(OracleError::NoMain)?;
    Ok(interp::Interp::new(program, libspec, step_limit).run_main(class, main))
}

/// Whether some warning points at a fact that explains `leak`.
pub fn is_covered(leak: &LeakedResource, warnings: &[Warning]) -> bool {
    warnings.iter().any(|w| match &w.origin {
        Origin::Site { site, .. } => *site == leak.site || leak.tags.contains(&Attribution::Site(*site)),
        Origin::Call { call, .. } => leak.tags.contains(&Attribution::Call(*call)),
        Origin::Param(i) => leak.tags.contains(&Attribution::Param(w.method.clone(), *i)),
        Origin::Field { field, .. } => leak.tags.contains(&Attribution::Overwrite(field.clone())),
    })
}

/// Leaks of `report` that no warning explains.
pub fn uncovered<'r>(report: &'r RuntimeReport, warnings: &[Warning]) -> Vec<&'r LeakedResource> {
    report.leaks.iter().filter(|l| !is_covered(l, warnings)).collect()
}
