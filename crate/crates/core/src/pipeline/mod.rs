//! The end-to-end flow over a set of source files: infer and check, transform,
//! re-infer and re-check, repair and validate, then score the outcome.
//!
//! Each file is an independent program and is processed on its own; the
//! per-file reports are assembled in input order and their metrics summed.

mod metrics;
mod shift;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::checker::{check_program, Warning, WarningKind};
use crate::escape::EscapeAnalysis;
use crate::frontend::{parse, pretty_print, LibrarySpec, Program};
use crate::inference::{check_with_inference, infer_specs, SpecSet};
use crate::oracle::{validate_patch, ValidationVerdict};
use crate::repair::{materialize, plan_fix, unified_diff, Patch, Planned, RepairConfig, RepairError, Template, UnfixableReason};
use crate::transforms::{transform_all, EditLog};

pub use metrics::{compute_metrics, fmt_rational, MetricsReport, WarningSetPair};
pub use shift::{build_shift_map, build_shift_map_lenient, ShiftError, ShiftMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Parse,
    Shift,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{file}: {stage} stage: {message}")]
pub struct PipelineError {
    pub file: String,
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    pub transforms: bool,
    /// Wrapper classification in the escape analysis.
    pub enhancements: bool,
    /// The constructor-first-write filter and pre-close repairs.
    pub overwrite_handling: bool,
    pub max_iterations: usize,
    /// Fail on a warning with several candidate roots instead of picking
    /// the first.
    pub strict_mapping: bool,
    pub repair: RepairConfig,
    /// Per-file overrides of `repair`, keyed by source name.
    pub repair_overrides: BTreeMap<String, RepairConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            transforms: true,
            enhancements: true,
            overwrite_handling: true,
            max_iterations: 3,
            strict_mapping: true,
            repair: RepairConfig::default(),
            repair_overrides: BTreeMap::new(),
        }
    }
}

impl PipelineConfig {
    fn repair_for(&self, file: &str) -> RepairConfig {
        self.repair_overrides.get(file).copied().unwrap_or(self.repair)
    }
}

/// What happened to one warning of the transformed program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Fixed(Template),
    /// Gone from the program by the time its turn came.
    ResolvedByEarlierPatch,
    Unfixable(UnfixableReason),
    ValidationFailed(Vec<String>),
    MaterializationFailure(String),
    Stale,
    NotAttempted,
}

impl Outcome {
    pub fn is_fixed(&self) -> bool {
        matches!(self, Outcome::Fixed(_) | Outcome::ResolvedByEarlierPatch)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Fixed(t) => write!(f, "Fixed({t})"),
            Outcome::ResolvedByEarlierPatch => f.write_str("ResolvedByEarlierPatch"),
            Outcome::Unfixable(r) => write!(f, "Unfixable({r})"),
            Outcome::ValidationFailed(rs) => write!(f, "ValidationFailed({})", rs.join("; ")),
            Outcome::MaterializationFailure(r) => write!(f, "MaterializationFailure({r})"),
            Outcome::Stale => f.write_str("Stale"),
            Outcome::NotAttempted => f.write_str("NotAttempted"),
        }
    }
}

/// The fate of an original warning, or of a root first exposed by the
/// transforms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Disposition {
    Fixed,
    ResolvedByTransform,
    /// Carries the reason, or the outcome, of the first shifted warning
    /// left unfixed.
    Unfixable(String),
}

impl fmt::Display for Disposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Disposition::Fixed => f.write_str("Fixed"),
            Disposition::ResolvedByTransform => f.write_str("ResolvedByTransform"),
            Disposition::Unfixable(r) => write!(f, "Unfixable({r})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FileReport {
    pub file: String,
    pub original_text: String,
    /// Inferred on the original program.
    pub specs: SpecSet,
    /// Original program checked without inferred specifications.
    pub w_orig: Vec<Warning>,
    /// Original program checked with inferred specifications.
    pub w_inferred: Vec<Warning>,
    pub edits: EditLog,
    /// Inferred on the transformed program.
    pub xform_specs: SpecSet,
    pub w_xform: Vec<Warning>,
    pub shift: ShiftMap,
    /// Every warning that reached the repair loop, keyed by id.
    pub outcomes: BTreeMap<String, Outcome>,
    /// Accepted patches in the order they were applied.
    pub patches: Vec<Patch>,
    /// Every validation run, in order.
    pub verdicts: Vec<(String, ValidationVerdict)>,
    /// Warning ids left after each iteration.
    pub unresolved: Vec<Vec<String>>,
    pub final_warnings: Vec<Warning>,
    pub final_text: String,
    pub dispositions: BTreeMap<String, Disposition>,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub files: Vec<FileReport>,
    pub metrics: MetricsReport,
}

fn warnings_json(ws: &[Warning]) -> Value {
    Value::Array(ws.iter().map(Warning::to_json).collect())
}

fn verdict_json(v: &ValidationVerdict) -> Value {
    match v {
        ValidationVerdict::Pass => json!("Pass"),
        ValidationVerdict::Fail(fs) => json!({ "Fail": fs.iter().map(ToString::to_string).collect::<Vec<_>>() }),
    }
}

impl FileReport {
    /// Unified diff from the original source to the final program.
    pub fn diff(&self) -> String {
        unified_diff(&self.file, &self.original_text, &self.final_text)
    }

    pub fn changed(&self) -> bool {
        self.final_text != pretty_print(&parse(&self.file, &self.original_text).expect("reported sources parse"))
    }

    pub fn to_json(&self) -> Value {
        let map = |m: &BTreeMap<String, String>| json!(m);
        json!({
            "file": self.file,
            "specs": self.specs.to_json(),
            "wOrig": warnings_json(&self.w_orig),
            "wInferred": warnings_json(&self.w_inferred),
            "edits": self.edits.to_json(),
            "xformSpecs": self.xform_specs.to_json(),
            "wXform": warnings_json(&self.w_xform),
            "shift": map(&self.shift.pairs),
            "ambiguous": json!(self.shift.ambiguous),
            "outcomes": self.outcomes.iter().map(|(k, v)| (k.clone(), json!(v.to_string()))).collect::<serde_json::Map<_, _>>(),
            "patches": self.patches.iter().map(|p| {
                let mut j = p.to_json();
                j["diff"] = json!(p.diff);
                j
            }).collect::<Vec<_>>(),
            "verdicts": self.verdicts.iter().map(|(id, v)| json!({ "warningId": id, "verdict": verdict_json(v) })).collect::<Vec<_>>(),
            "unresolved": self.unresolved,
            "finalWarnings": warnings_json(&self.final_warnings),
            "dispositions": self.dispositions.iter().map(|(k, v)| (k.clone(), json!(v.to_string()))).collect::<serde_json::Map<_, _>>(),
            "metrics": self.metrics.to_json(),
        })
    }
}

impl PipelineReport {
    pub fn to_json(&self) -> Value {
        json!({
            "files": self.files.iter().map(FileReport::to_json).collect::<Vec<_>>(),
            "metrics": self.metrics.to_json(),
        })
    }

    /// 3 when a patch failed validation, else 2 when an unfixable warning
    /// remains, else 0.
    pub fn exit_code(&self) -> i32 {
        let outcomes = || self.files.iter().flat_map(|f| f.outcomes.values());
        if outcomes().any(|o| matches!(o, Outcome::ValidationFailed(_))) {
            3
        } else if self.files.iter().flat_map(|f| f.dispositions.values()).any(|d| matches!(d, Disposition::Unfixable(_))) {
            2
        } else {
            0
        }
    }

    /// Per-file disposition counts and the category table.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for f in &self.files {
            let mut counts: BTreeMap<String, usize> = BTreeMap::new();
            for d in f.dispositions.values() {
                *counts.entry(d.to_string()).or_default() += 1;
            }
            let counts: Vec<String> = counts.iter().map(|(d, n)| format!("{d}: {n}")).collect();
            out.push_str(&format!("{}: {} warnings, {} patches", f.file, f.w_orig.len(), f.patches.len()));
            if !counts.is_empty() {
                out.push_str(&format!(" ({})", counts.join(", ")));
            }
            out.push('\n');
        }
        out.push('\n');
        out.push_str(&self.metrics.table());
        out
    }

    /// Writes `report.json`, `metrics.json`, `summary.txt`, the final text
    /// of every changed file under `patched/` and its diff under `patches/`.
    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        let pretty = |v: &Value| serde_json::to_string_pretty(v).expect("JSON values serialize") + "\n";
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), pretty(&self.to_json()))?;
        fs::write(dir.join("metrics.json"), pretty(&self.metrics.to_json()))?;
        fs::write(dir.join("summary.txt"), self.summary())?;
        for f in self.files.iter().filter(|f| f.changed()) {
            let patched = dir.join("patched").join(&f.file);
            let patch = dir.join("patches").join(format!("{}.patch", f.file));
            for p in [&patched, &patch] {
                if let Some(parent) = p.parent() {
                    fs::create_dir_all(parent)?;
                }
            }
            fs::write(patched, &f.final_text)?;
            fs::write(patch, f.diff())?;
        }
        Ok(())
    }
}

struct FileRun<'a> {
    libspec: &'a LibrarySpec,
    config: &'a PipelineConfig,
    repair: RepairConfig,
}

impl FileRun<'_> {
    fn check(&self, p: &Program) -> (SpecSet, Vec<Warning>) {
        if self.config.overwrite_handling {
            check_with_inference(p, self.libspec)
        } else {
            let specs = infer_specs(p, self.libspec);
            let ws = check_program(p, &specs, self.libspec);
            (specs, ws)
        }
    }

    /// Tries one warning of `current`; returns the patched program on an
    /// accepted patch.
    fn attempt(&self, w: &Warning, current: &Program, text: &str, specs: &SpecSet, report: &mut FileReport) -> (Outcome, Option<Program>) {
        if w.kind == WarningKind::OwningFieldOverwrite && !self.config.overwrite_handling {
            return (Outcome::NotAttempted, None);
        }
        let ea = if self.config.enhancements {
            EscapeAnalysis::new(current, specs, self.libspec)
        } else {
            EscapeAnalysis::without_wrappers(current, specs, self.libspec)
        };
        let plan = match plan_fix(w, current, specs, self.libspec, &ea) {
            Ok(Planned::Plan(p)) => p,
            Ok(Planned::Unfixable(r)) => return (Outcome::Unfixable(r), None),
            Err(_) => return (Outcome::Stale, None),
        };
        let patch = match materialize(current, text, &plan, &self.repair) {
            Ok((_, patch)) => patch,
            Err(RepairError::MaterializationFailure { reason, .. }) => return (Outcome::MaterializationFailure(reason.to_string()), None),
            Err(RepairError::StaleWarning(_)) => return (Outcome::Stale, None),
        };
        let verdict = validate_patch(current, &patch.new_text, self.libspec, &w.id);
        report.verdicts.push((w.id.clone(), verdict.clone()));
        match verdict {
            ValidationVerdict::Pass => {
                let next = parse(&current.source_name, &patch.new_text).expect("validated patches parse");
                report.patches.push(patch);
                (Outcome::Fixed(plan.template), Some(next))
            }
            ValidationVerdict::Fail(fs) => (Outcome::ValidationFailed(fs.iter().map(ToString::to_string).collect()), None),
        }
    }

    fn run(&self, file: &str, text: &str) -> Result<FileReport, PipelineError> {
        let err = |stage, message: String| PipelineError { file: file.to_string(), stage, message };
        let original = parse(file, text).map_err(|e| err(Stage::Parse, e.to_string()))?;
        let (specs, w_inferred) = self.check(&original);
        let w_orig = check_program(&original, &SpecSet::declared(&original), self.libspec);
        let (xp, edits) = if self.config.transforms { transform_all(&original, &w_orig, self.libspec) } else { (original.clone(), EditLog::default()) };
        let (xform_specs, w_xform) = self.check(&xp);
        let shift = if self.config.strict_mapping {
            build_shift_map(&w_orig, &w_xform, &xp, &xform_specs, self.libspec).map_err(|e| err(Stage::Shift, e.to_string()))?
        } else {
            build_shift_map_lenient(&w_orig, &w_xform, &xp, &xform_specs, self.libspec)
        };
        let mut report = FileReport {
            file: file.to_string(),
            original_text: text.to_string(),
            specs,
            w_orig,
            w_inferred,
            edits,
            xform_specs: xform_specs.clone(),
            w_xform: w_xform.clone(),
            shift,
            outcomes: BTreeMap::new(),
            patches: Vec::new(),
            verdicts: Vec::new(),
            unresolved: Vec::new(),
            final_warnings: Vec::new(),
            final_text: String::new(),
            dispositions: BTreeMap::new(),
            metrics: MetricsReport::empty(),
        };
        let mut current = xp;
        let mut text = pretty_print(&current);
        let (mut specs, mut warnings) = (xform_specs, w_xform);
        let mut todo: Vec<String> = warnings.iter().map(|w| w.id.clone()).collect();
        for _ in 0..self.config.max_iterations {
            if todo.is_empty() {
                break;
            }
            let mut dirty = false;
            for id in &todo {
                if dirty {
                    (specs, warnings) = self.check(&current);
                    dirty = false;
                }
                let Some(w) = warnings.iter().find(|w| &w.id == id) else {
                    report.outcomes.insert(id.clone(), Outcome::ResolvedByEarlierPatch);
                    continue;
                };
                let (outcome, next) = self.attempt(w, &current, &text, &specs, &mut report);
                report.outcomes.insert(id.clone(), outcome);
                if let Some(next) = next {
                    text = pretty_print(&next);
                    current = next;
                    dirty = true;
                }
            }
            if dirty {
                (specs, warnings) = self.check(&current);
            }
            report.unresolved.push(warnings.iter().map(|w| w.id.clone()).collect());
            todo = warnings.iter().filter(|w| !report.outcomes.contains_key(&w.id)).map(|w| w.id.clone()).collect();
        }
        report.final_warnings = warnings;
        report.final_text = text;
        self.score(&mut report);
        Ok(report)
    }

    /// Fills in dispositions and metrics. A transformed-program warning
    /// counts as fixed when its patch validated or it is gone at the end.
    fn score(&self, report: &mut FileReport) {
        let remaining: BTreeSet<&str> = report.final_warnings.iter().map(|w| w.id.as_str()).collect();
        let fixed: BTreeSet<String> = report
            .w_xform
            .iter()
            .map(|w| &w.id)
            .filter(|id| report.outcomes.get(*id).is_some_and(Outcome::is_fixed) || !remaining.contains(id.as_str()))
            .cloned()
            .collect();
        let roots = report.shift.roots();
        let mut dispositions = BTreeMap::new();
        let disposition = |root: &str| {
            let unfixed = report.shift.shifted_of(root).into_iter().find(|s| !fixed.contains(*s));
            match unfixed {
                None => Disposition::Fixed,
                Some(s) => Disposition::Unfixable(match report.outcomes.get(s) {
                    Some(Outcome::Unfixable(r)) => r.to_string(),
                    Some(o) => o.to_string(),
                    None => Outcome::NotAttempted.to_string(),
                }),
            }
        };
        for w in &report.w_orig {
            let d = if roots.contains(w.id.as_str()) { disposition(&w.id) } else { Disposition::ResolvedByTransform };
            dispositions.insert(w.id.clone(), d);
        }
        for root in roots {
            dispositions.entry(root.to_string()).or_insert_with(|| disposition(root));
        }
        report.dispositions = dispositions;
        let pair = WarningSetPair { w_orig: report.w_orig.clone(), w_xform: report.w_xform.clone() };
        report.metrics = compute_metrics(&pair, &report.shift, &fixed);
    }
}

/// Runs the whole flow on each `(name, text)` source. Files are processed
/// concurrently; the report lists them in the order given.
pub fn run_pipeline(sources: &[(String, String)], libspec: &LibrarySpec, config: &PipelineConfig) -> Result<PipelineReport, PipelineError> {
    let files: Vec<FileReport> =
        sources.par_iter().map(|(name, text)| FileRun { libspec, config, repair: config.repair_for(name) }.run(name, text)).collect::<Result<_, _>>()?;
    let metrics = files.iter().fold(MetricsReport::empty(), |acc, f| acc.merge(&f.metrics));
    Ok(PipelineReport { files, metrics })
}

#[cfg(test)]
mod tests;
