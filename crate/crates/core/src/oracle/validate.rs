//! Static and dynamic acceptance of a patched program.

use std::fmt;

use super::{run, RunStatus, DEFAULT_STEP_LIMIT};
use crate::checker::reject_final_writes;
use crate::frontend::{parse, LibrarySpec, Program, SiteId};
use crate::inference::check_with_inference;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationFailure {
    Parse(String),
    Compile(String),
    WarningPersists(String),
    UseAfterClose { site: SiteId, method: String },
    NewLeak(SiteId),
    OutputChanged,
    StatusChanged { before: RunStatus, after: RunStatus },
}

impl fmt::Display for ValidationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationFailure::Parse(m) => write!(f, "patched source does not parse: {m}"),
            ValidationFailure::Compile(m) => write!(f, "patched source does not compile: {m}"),
            ValidationFailure::WarningPersists(id) => write!(f, "warning {id} is still reported"),
            ValidationFailure::UseAfterClose { site, method } => write!(f, "use after close of {site} in {method}"),
            ValidationFailure::NewLeak(s) => write!(f, "new leak at {s}"),
            ValidationFailure::OutputChanged => write!(f, "observable output changed"),
            ValidationFailure::StatusChanged { before, after } => write!(f, "status changed from {before:?} to {after:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValidationVerdict {
    Pass,
    Fail(Vec<ValidationFailure>),
}

impl ValidationVerdict {
    pub fn is_pass(&self) -> bool {
        *self == ValidationVerdict::Pass
    }
}

/// Accepts `patched_text` as a repair of `warning_id` in `original` when it
/// compiles, no longer raises the warning, and behaves like the original
/// apart from closing more resources. Programs without `main`, and runs
/// that exhaust the step limit, are judged on the static checks alone.
pub fn validate_patch(original: &Program, patched_text: &str, libspec: &LibrarySpec, warning_id: &str) -> ValidationVerdict {
    let patched = match parse(&original.source_name, patched_text) {
        Ok(p) => p,
        Err(e) => return ValidationVerdict::Fail(vec![ValidationFailure::Parse(e.to_string())]),
    };
    let mut failures: Vec<ValidationFailure> = reject_final_writes(&patched).into_iter().map(|e| ValidationFailure::Compile(e.message)).collect();
    let (_, warnings) = check_with_inference(&patched, libspec);
    if warnings.iter().any(|w| w.id == warning_id) {
        failures.push(ValidationFailure::WarningPersists(warning_id.to_string()));
    }
    if let (Ok(before), Ok(after)) = (run(original, libspec, DEFAULT_STEP_LIMIT), run(&patched, libspec, DEFAULT_STEP_LIMIT)) {
        if !before.status.hit_step_limit() && !after.status.hit_step_limit() {
            failures.extend(after.use_after_close.iter().map(|u| ValidationFailure::UseAfterClose { site: u.site, method: u.method.clone() }));
            let mut remaining = before.leaked_sites.clone();
            for s in &after.leaked_sites {
                match remaining.iter().position(|r| r == s) {
                    Some(i) => {
                        remaining.remove(i);
                    }
                    None => failures.push(ValidationFailure::NewLeak(*s)),
                }
            }
            if before.observable_output() != after.observable_output() {
                failures.push(ValidationFailure::OutputChanged);
            }
            if before.status != after.status {
                failures.push(ValidationFailure::StatusChanged { before: before.status, after: after.status });
            }
        }
    }
    if failures.is_empty() {
        ValidationVerdict::Pass
    } else {
        ValidationVerdict::Fail(failures)
    }
}
