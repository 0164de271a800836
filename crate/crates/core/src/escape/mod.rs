//! Escape analysis for allocated resources, classification of wrapper
//! classes, and field containment.
//!
//! The analysis is flow-insensitive: a local is tainted if any copy chain
//! from the tracked value reaches it anywhere in the method. Passing a
//! tainted value to a wrapper constructor is not an escape; the wrapper is
//! tainted in turn.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use serde_json::{json, Value};

use crate::cfg::{lower_program, Cfg, Instr, Var};
use crate::checker::{callee_of, must_call_of};
use crate::frontend::{CallId, LibrarySpec, MethodKey, ParamMode, Program, SiteId};
use crate::inference::SpecSet;

/// The library class whose retaining methods model data structures.
pub const COLLECTION_CLASS: &str = "List";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Route {
    ToField { class: String, field: String },
    Returned,
    PassedAsArg { callee: String, position: usize },
    StoredInCollection,
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Route::ToField { class, field } => write!(f, "stored into field {class}.{field}"),
            Route::Returned => write!(f, "returned"),
            Route::PassedAsArg { callee, position } => write!(f, "passed as argument {position} of {callee}"),
            Route::StoredInCollection => write!(f, "stored into a collection"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum WrapperClassification {
    /// Takes over the resource and releases it in `finalizer`.
    ResourceAlias {
        finalizer: String,
        witness_field: String,
    },
    /// Uses the resource without a method that releases it.
    ResourceAccessor {
        witness_field: String,
    },
    NotAWrapper,
}

impl WrapperClassification {
    pub fn is_wrapper(&self) -> bool {
        !matches!(self, WrapperClassification::NotAWrapper)
    }

    pub fn witness_field(&self) -> Option<&str> {
        match self {
            WrapperClassification::ResourceAlias { witness_field, .. } | WrapperClassification::ResourceAccessor { witness_field } => Some(witness_field),
            WrapperClassification::NotAWrapper => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct EscapeResult {
    /// True iff `routes` is nonempty.
    pub escapes: bool,
    /// Sorted and free of duplicates.
    pub routes: Vec<Route>,
    /// Wrapper classes that absorbed the value, in first-seen order.
    pub wrapper_sinks: Vec<(String, WrapperClassification)>,
    /// Named locals that may hold the value or a wrapper of it.
    pub tracked_locals: BTreeSet<String>,
}

impl EscapeResult {
    pub fn to_json(&self) -> Value {
        json!({
            "escapes": self.escapes,
            "routes": self.routes.iter().map(ToString::to_string).collect::<Vec<_>>(),
            "wrapper_sinks": self.wrapper_sinks.iter().map(|(c, k)| json!({"class": c, "classification": k})).collect::<Vec<_>>(),
        })
    }
}

/// A class's classification plus the constructor parameters it absorbs,
/// as (arity, position) pairs.
#[derive(Debug, Clone)]
struct WrapperInfo {
    kind: WrapperClassification,
    absorbs: BTreeSet<(usize, usize)>,
}

impl WrapperInfo {
    fn none() -> Self {
        WrapperInfo { kind: WrapperClassification::NotAWrapper, absorbs: BTreeSet::new() }
    }
}

/// Result of tainting a method from a set of start locals.
#[derive(Default)]
struct Trace {
    tainted: BTreeSet<Var>,
    /// Field stores as (receiver is `this`, class, field).
    stores: Vec<(bool, String, String)>,
    routes: Vec<Route>,
    sinks: Vec<(String, WrapperClassification)>,
}

impl Trace {
    fn all_routes(&self) -> Vec<Route> {
        let mut rs: Vec<Route> = self.stores.iter().map(|(_, c, f)| Route::ToField { class: c.clone(), field: f.clone() }).collect();
        rs.extend(self.routes.iter().cloned());
        rs.sort();
        rs.dedup();
        rs
    }
}

/// Shared state of one analysis run. Classifications are memoized only
/// when computed with nothing else under classification, so the memo does
/// not depend on query order.
struct Engine<'a> {
    program: &'a Program,
    specs: &'a SpecSet,
    libspec: &'a LibrarySpec,
    cfgs: &'a [Cfg],
    memo: RefCell<BTreeMap<String, WrapperInfo>>,
    visiting: RefCell<Vec<String>>,
    /// When set, no class is a wrapper.
    plain: bool,
}

impl<'a> Engine<'a> {
    fn new(program: &'a Program, specs: &'a SpecSet, libspec: &'a LibrarySpec, cfgs: &'a [Cfg]) -> Self {
        Engine { program, specs, libspec, cfgs, memo: RefCell::default(), visiting: RefCell::default(), plain: false }
    }

    fn is_resource(&self, ty: &str) -> bool {
        must_call_of(ty, self.program, self.specs, self.libspec).is_ok_and(|m| !m.is_empty())
    }

    fn info(&self, class: &str) -> WrapperInfo {
        if let Some(i) = self.memo.borrow().get(class) {
            return i.clone();
        }
        if self.plain || self.program.class(class).is_none() || self.visiting.borrow().iter().any(|c| c == class) {
            return WrapperInfo::none();
        }
        self.visiting.borrow_mut().push(class.to_string());
        let info = self.classify(class);
        let mut visiting = self.visiting.borrow_mut();
        visiting.pop();
        if visiting.is_empty() {
            self.memo.borrow_mut().insert(class.to_string(), info.clone());
        }
        info
    }

    fn classify(&self, class: &str) -> WrapperInfo {
        let c = self.program.class(class).expect("classified classes exist");
        let mut fields_of: BTreeMap<(usize, usize), BTreeSet<String>> = BTreeMap::new();
        for cfg in self.cfgs.iter().filter(|g| g.key.class == class && g.key.is_ctor()) {
            let arity = cfg.params.len();
            for (i, p) in cfg.params.iter().enumerate() {
                if !cfg.var_types.get(p).is_some_and(|t| self.is_resource(t)) {
                    continue;
                }
                let t = self.trace(cfg, vec![p.clone()]);
                let own_private = |(this, cl, f): &(bool, String, String)| {
                    *this && cl == class && c.field(f).is_some_and(|d| d.modifiers.is_private && !d.modifiers.is_static)
                };
                if t.routes.is_empty() && !t.stores.is_empty() && t.stores.iter().all(own_private) {
                    fields_of.insert((arity, i), t.stores.iter().map(|s| s.2.clone()).collect());
                }
            }
        }
        let mut candidates: BTreeSet<String> = fields_of.values().flatten().cloned().collect();
        for cfg in self.cfgs.iter().filter(|g| g.key.class == class && g.key.is_ctor()) {
            for n in &cfg.nodes {
                if let Instr::StoreField { recv, class: cl, field, .. } = &n.instr {
                    let owned = c.field(field).is_some_and(|d| d.modifiers.is_private && !d.modifiers.is_static && self.is_resource(&d.ty));
                    if recv.is_this() && cl == class && owned {
                        candidates.insert(field.clone());
                    }
                }
            }
        }
        let contained: BTreeSet<String> = candidates.into_iter().filter(|f| self.contained(class, f)).collect();
        fields_of.retain(|_, fs| fs.iter().all(|f| contained.contains(f)));
        let absorbed: BTreeSet<&String> = fields_of.values().flatten().collect();
        let first = |set: &dyn Fn(&String) -> bool| c.fields.iter().find(|d| set(&d.name)).map(|d| d.name.clone());
        let finalizer = self.specs.class_must_call(class).and_then(|ms| ms.first().cloned()).or_else(|| c.method("close").map(|_| "close".to_string()));
        let kind = match finalizer {
            Some(finalizer) => match first(&|f| contained.contains(f)) {
                Some(witness_field) => WrapperClassification::ResourceAlias { finalizer, witness_field },
                None => return WrapperInfo::none(),
            },
            None => match first(&|f| absorbed.contains(f)) {
                Some(witness_field) => WrapperClassification::ResourceAccessor { witness_field },
                None => return WrapperInfo::none(),
            },
        };
        WrapperInfo { kind, absorbs: fields_of.into_keys().collect() }
    }

    fn contained(&self, class: &str, field: &str) -> bool {
        let Some(decl) = self.program.class(class).and_then(|c| c.field(field)) else { return false };
        if !decl.modifiers.is_private {
            return false;
        }
        self.cfgs.iter().all(|cfg| {
            cfg.nodes.iter().all(|n| match &n.instr {
                Instr::LoadField { dst, class: c, field: f, .. } if c == class && f == field => {
                    let t = self.trace(cfg, vec![dst.clone()]);
                    t.routes.is_empty() && t.stores.is_empty()
                }
                _ => true,
            })
        })
    }

    /// Taints `start` to a fixpoint, then collects the routes and sinks.
    fn trace(&self, cfg: &Cfg, start: Vec<Var>) -> Trace {
        let mut t = Trace { tainted: start.into_iter().collect(), ..Trace::default() };
        loop {
            let before = t.tainted.len();
            for n in &cfg.nodes {
                self.step(&n.instr, &mut t);
            }
            if t.tainted.len() == before {
                break;
            }
        }
        t.routes.sort();
        t.routes.dedup();
        t.stores.sort();
        t.stores.dedup();
        t
    }

    fn step(&self, instr: &Instr, t: &mut Trace) {
        let tainted_args =
            |args: &[Var], t: &Trace| -> Vec<usize> { args.iter().enumerate().filter(|(_, a)| t.tainted.contains(*a)).map(|(i, _)| i).collect() };
        match instr {
            Instr::Copy { dst, src } if t.tainted.contains(src) => {
                t.tainted.insert(dst.clone());
            }
            Instr::StoreField { recv, class, field, src, .. } if t.tainted.contains(src) => {
                t.stores.push((recv.is_this(), class.clone(), field.clone()));
            }
            Instr::Return { src: Some(v) } if t.tainted.contains(v) => t.routes.push(Route::Returned),
            Instr::Alloc { class, args, dst, .. } => {
                for i in tainted_args(args, t) {
                    if let Some(lib) = self.libspec.constructor(class, args.len()) {
                        if lib.param(i) != ParamMode::NotOwning {
                            t.tainted.insert(dst.clone());
                        }
                        continue;
                    }
                    let info = self.info(class);
                    if info.kind.is_wrapper() && info.absorbs.contains(&(args.len(), i)) {
                        if !t.sinks.iter().any(|(c, _)| c == class) {
                            t.sinks.push((class.clone(), info.kind.clone()));
                        }
                        t.tainted.insert(dst.clone());
                    } else {
                        let callee = callee_of(self.program, instr).map_or_else(|| format!("{class}.<init>"), |k| k.to_string());
                        t.routes.push(Route::PassedAsArg { callee, position: i });
                    }
                }
            }
            Instr::Invoke { class, method, args, .. } => {
                for i in tainted_args(args, t) {
                    let route = match self.libspec.method(class, method).map(|m| m.param(i)) {
                        Some(ParamMode::NotOwning) => continue,
                        Some(ParamMode::Retaining) if class == COLLECTION_CLASS => Route::StoredInCollection,
                        _ => {
                            let callee = callee_of(self.program, instr)
                                .map_or_else(|| format!("{}.{method}", if class.is_empty() { "?" } else { class }), |k| k.to_string());
                            Route::PassedAsArg { callee, position: i }
                        }
                    };
                    t.routes.push(route);
                }
            }
            _ => {}
        }
    }

    fn result(&self, cfg: &Cfg, start: Var) -> EscapeResult {
        let t = self.trace(cfg, vec![start]);
        let routes = t.all_routes();
        EscapeResult {
            escapes: !routes.is_empty(),
            routes,
            wrapper_sinks: t.sinks,
            tracked_locals: t.tainted.into_iter().filter(|v| !v.is_temp() && !v.is_this()).map(|v| v.0).collect(),
        }
    }
}

/// Escape queries over one program. Every class is classified when the
/// analysis is built; queries afterwards only read the table.
pub struct EscapeAnalysis<'a> {
    program: &'a Program,
    specs: &'a SpecSet,
    libspec: &'a LibrarySpec,
    cfgs: Vec<Cfg>,
    wrappers: BTreeMap<String, WrapperInfo>,
    plain: bool,
}

impl<'a> EscapeAnalysis<'a> {
    /// An analysis that treats every constructor argument as an escape,
    /// recognizing no wrapper classes.
    pub fn without_wrappers(program: &'a Program, specs: &'a SpecSet, libspec: &'a LibrarySpec) -> Self {
        let cfgs = lower_program(program, libspec);
        EscapeAnalysis { program, specs, libspec, cfgs, wrappers: BTreeMap::new(), plain: true }
    }

    pub fn new(program: &'a Program, specs: &'a SpecSet, libspec: &'a LibrarySpec) -> Self {
        let cfgs = lower_program(program, libspec);
        let engine = Engine::new(program, specs, libspec, &cfgs);
        for c in &program.classes {
            engine.info(&c.name);
        }
        let wrappers = engine.memo.into_inner();
        EscapeAnalysis { program, specs, libspec, cfgs, wrappers, plain: false }
    }

    /// Runs `f` on an engine whose memo is the frozen table.
    fn with_engine<T>(&self, f: impl FnOnce(&Engine<'_>) -> T) -> T {
        let mut engine = Engine::new(self.program, self.specs, self.libspec, &self.cfgs);
        engine.plain = self.plain;
        *engine.memo.borrow_mut() = self.wrappers.clone();
        f(&engine)
    }

    pub fn cfgs(&self) -> &[Cfg] {
        &self.cfgs
    }

    pub fn cfg(&self, key: &MethodKey) -> Option<&Cfg> {
        self.cfgs.iter().find(|c| &c.key == key)
    }

    pub fn classify(&self, class: &str) -> WrapperClassification {
        self.wrappers.get(class).map_or(WrapperClassification::NotAWrapper, |i| i.kind.clone())
    }

    pub fn field_contained(&self, class: &str, field: &str) -> bool {
        self.with_engine(|e| e.contained(class, field))
    }

    /// Routes of the object allocated at `site` in `key`; `None` if the
    /// method has no such allocation.
    pub fn escapes_site(&self, key: &MethodKey, site: SiteId) -> Option<EscapeResult> {
        let cfg = self.cfg(key)?;
        let dst = cfg.nodes.iter().find_map(|n| match &n.instr {
            Instr::Alloc { site: s, dst, .. } if *s == site => Some(dst.clone()),
            _ => None,
        })?;
        Some(self.with_engine(|e| e.result(cfg, dst)))
    }

    /// Routes of the value returned by the call `call` in `key`. A
    /// discarded result goes nowhere.
    pub fn escapes_call(&self, key: &MethodKey, call: CallId) -> Option<EscapeResult> {
        let cfg = self.cfg(key)?;
        let dst = cfg.nodes.iter().find_map(|n| match &n.instr {
            Instr::Invoke { call: c, dst, .. } if *c == call => Some(dst.clone()),
            _ => None,
        })?;
        match dst {
            Some(dst) => Some(self.with_engine(|e| e.result(cfg, dst))),
            None => Some(EscapeResult::default()),
        }
    }

    /// The method allocating at `site`, for callers that only know the site.
    pub fn method_of_site(&self, site: SiteId) -> Option<&MethodKey> {
        self.cfgs.iter().find(|c| c.nodes.iter().any(|n| matches!(&n.instr, Instr::Alloc { site: s, .. } if *s == site))).map(|c| &c.key)
    }
}

/// True if `class.field` is private and no value read from it leaves
/// through a field store, return, collection or non-wrapper argument.
pub fn field_containment(program: &Program, specs: &SpecSet, libspec: &LibrarySpec, class: &str, field: &str) -> bool {
    EscapeAnalysis::new(program, specs, libspec).field_contained(class, field)
}

pub fn classify_wrapper(program: &Program, specs: &SpecSet, libspec: &LibrarySpec, class: &str) -> WrapperClassification {
    EscapeAnalysis::new(program, specs, libspec).classify(class)
}

/// Routes by which the object allocated at `site` in `key` leaves the method.
pub fn escapes(program: &Program, specs: &SpecSet, libspec: &LibrarySpec, key: &MethodKey, site: SiteId) -> Option<EscapeResult> {
    EscapeAnalysis::new(program, specs, libspec).escapes_site(key, site)
}

#[cfg(test)]
mod tests;
