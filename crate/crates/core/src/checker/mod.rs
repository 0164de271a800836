//! Must-call obligation checking.
//!
//! Every allocation of a class with a nonempty must-call set creates an
//! obligation. An obligation is discharged when all its must-call methods
//! have been invoked on some alias, when it is stored into an `@Owning`
//! field, passed in an `@Owning` parameter position, or returned from a
//! method whose return is owning. Anything left at method exit, or whose
//! last alias is overwritten, is a leak.

pub mod effects;
pub mod filter;
pub mod final_writes;
pub(crate) mod obligations;

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use crate::cfg::{lower_program, must_alias, Cfg};
use crate::frontend::{is_builtin_type, CallId, LibrarySpec, MethodKey, Program, Provenance, SiteId};
use crate::inference::SpecSet;

pub use effects::{callee_of, WriteSummary};
pub use filter::filter_constructor_first_writes;
pub use final_writes::{reject_final_writes, CompileError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MustCallSource {
    Library,
    Declared,
    Inferred,
    Injected,
}

impl From<Provenance> for MustCallSource {
    fn from(p: Provenance) -> Self {
        match p {
            Provenance::Declared => MustCallSource::Declared,
            Provenance::Inferred => MustCallSource::Inferred,
            Provenance::Injected => MustCallSource::Injected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MustCallSet {
    /// In declaration order.
    pub methods: Vec<String>,
    pub source: MustCallSource,
}

impl MustCallSet {
    pub fn is_empty(&self) -> bool {
        self.methods.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("unknown class `{0}`")]
    UnknownClass(String),
}

/// The methods that must be invoked on every object of `class`.
pub fn must_call_of(class: &str, program: &Program, specs: &SpecSet, libspec: &LibrarySpec) -> Result<MustCallSet, CheckError> {
    if let Some(c) = libspec.class(class) {
        return Ok(MustCallSet { methods: c.must_call.clone(), source: MustCallSource::Library });
    }
    if program.class(class).is_some() {
        return Ok(match specs.class_mustcall.get(class) {
            Some(s) => MustCallSet { methods: s.must_call.clone(), source: s.provenance.into() },
            None => MustCallSet { methods: Vec::new(), source: MustCallSource::Declared },
        });
    }
    if is_builtin_type(class) {
        return Ok(MustCallSet { methods: Vec::new(), source: MustCallSource::Library });
    }
    Err(CheckError::UnknownClass(class.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum WarningKind {
    UnsatisfiedObligation,
    OwningFieldOverwrite,
}

impl fmt::Display for WarningKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WarningKind::UnsatisfiedObligation => "UnsatisfiedObligation",
            WarningKind::OwningFieldOverwrite => "OwningFieldOverwrite",
        })
    }
}

/// Where the leaked or overwritten value came from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    /// `ordinal` counts earlier allocations of the same class in the method.
    Site { site: SiteId, ordinal: usize },
    /// A resource returned by a user method.
    Call { call: CallId, callee: MethodKey, ordinal: usize },
    /// An `@Owning` parameter.
    Param(usize),
    /// The old value of an owning field; `write` counts earlier writes.
    Field { field: String, write: usize },
}

impl Origin {
    fn descriptor(&self) -> String {
        match self {
            Origin::Site { ordinal, .. } => format!("new#{ordinal}"),
            Origin::Call { callee, ordinal, .. } => format!("call {callee}#{ordinal}"),
            Origin::Param(i) => format!("param#{i}"),
            Origin::Field { field, write } => format!("field {field}#{write}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Warning {
    /// Stable across line shifts and across rewrites that keep the
    /// per-method order of allocations.
    pub id: String,
    pub kind: WarningKind,
    pub file: String,
    pub line: u32,
    pub resource_class: String,
    pub message: String,
    pub method: MethodKey,
    pub origin: Origin,
    /// The allocation site of the leaked value, for site origins.
    pub site: Option<SiteId>,
    /// For overwrites: the allocation site of the value being stored, when known.
    pub stored_site: Option<SiteId>,
}

impl PartialEq for Warning {
    fn eq(&self, other: &Self) -> bool {
        self.id == other.id
    }
}

impl Eq for Warning {}

/// FNV-1a, 64 bit.
pub fn stable_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl Warning {
    pub(crate) fn new(kind: WarningKind, file: &str, line: u32, resource_class: &str, method: &MethodKey, origin: Origin, message: String) -> Self {
        let descriptor = format!("{kind}|{file}|{method}|{resource_class}|{}", origin.descriptor());
        let site = match &origin {
            Origin::Site { site, .. } => Some(*site),
            _ => None,
        };
        Warning {
            id: format!("W{:016x}", stable_hash(&descriptor)),
            kind,
            file: file.to_string(),
            line,
            resource_class: resource_class.to_string(),
            message,
            method: method.clone(),
            origin,
            site,
            stored_site: None,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "id": self.id,
            "kind": self.kind.to_string(),
            "file": self.file,
            "line": self.line,
            "resourceClass": self.resource_class,
            "message": self.message,
        })
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: [{}] {} ({})", self.file, self.line, self.kind, self.message, self.id)
    }
}

/// Everything a method check needs besides its CFG.
pub struct CheckCtx<'a> {
    pub program: &'a Program,
    pub specs: &'a SpecSet,
    pub libspec: &'a LibrarySpec,
    pub summary: &'a WriteSummary,
}

impl<'a> CheckCtx<'a> {
    /// Must-call methods of `class`; unknown classes have none.
    pub fn must_call(&self, class: &str) -> Vec<String> {
        must_call_of(class, self.program, self.specs, self.libspec).map(|m| m.methods).unwrap_or_default()
    }

    pub fn is_resource(&self, class: &str) -> bool {
        !self.must_call(class).is_empty()
    }

    /// The `@Owning` non-static fields of `class` whose type is a resource,
    /// with their must-call sets.
    pub fn owning_resource_fields(&self, class: &str) -> Vec<(String, Vec<String>)> {
        let Some(c) = self.program.class(class) else { return Vec::new() };
        c.fields
            .iter()
            .filter(|f| !f.modifiers.is_static && self.specs.is_owning_field(class, &f.name))
            .map(|f| (f.name.clone(), self.must_call(&f.ty)))
            .filter(|(_, m)| !m.is_empty())
            .collect()
    }
}

/// Checks one method or constructor.
pub fn check_method(ctx: &CheckCtx<'_>, cfg: &Cfg) -> Vec<Warning> {
    let tracked = ctx.owning_resource_fields(&cfg.key.class).into_iter().collect();
    let aliases = must_alias(cfg);
    obligations::warnings(ctx, cfg, tracked, &aliases)
}

/// Checks every method of `program`; warnings are sorted by line and id and
/// free of duplicate ids.
pub fn check_program(program: &Program, specs: &SpecSet, libspec: &LibrarySpec) -> Vec<Warning> {
    let cfgs = lower_program(program, libspec);
    let summary = WriteSummary::build(program, &cfgs);
    let ctx = CheckCtx { program, specs, libspec, summary: &summary };
    let mut out: Vec<Warning> = cfgs.iter().flat_map(|c| check_method(&ctx, c)).collect();
    sort_warnings(&mut out);
    out
}

pub fn sort_warnings(ws: &mut Vec<Warning>) {
    ws.sort_by(|a, b| (&a.file, a.line, &a.id).cmp(&(&b.file, b.line, &b.id)));
    let mut seen = BTreeSet::new();
    ws.retain(|w| seen.insert(w.id.clone()));
}

#[cfg(test)]
mod tests;
