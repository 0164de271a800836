//! The obligation dataflow: called-methods accumulation per obligation, plus
//! the same accumulation for tracked fields of `this`.

use std::collections::{BTreeMap, BTreeSet};

use super::{callee_of, CheckCtx, Origin, Warning, WarningKind};
use crate::cfg::{solve, AliasSets, Analysis, Cfg, EdgeKind, Instr, Literal, NodeId, Recv, Solution, Var};
use crate::frontend::{LibrarySpec, MethodKey, ParamMode};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct Obligation {
    pub origin: Origin,
    pub class: String,
    pub must: BTreeSet<String>,
    pub line: u32,
    /// Locals definitely holding the value.
    pub aliases: BTreeSet<Var>,
    /// Methods definitely invoked on the value.
    pub called: BTreeSet<String>,
}

impl Obligation {
    fn satisfied(&self) -> bool {
        self.must.is_subset(&self.called)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub(crate) struct FieldFact {
    pub called: BTreeSet<String>,
    pub aliases: BTreeSet<Var>,
}

/// Obligations join by union; field facts and known-null locals by
/// intersection.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub(crate) struct State {
    pub obligations: BTreeSet<Obligation>,
    pub fields: BTreeMap<String, FieldFact>,
    pub nulls: BTreeSet<Var>,
}

pub(crate) enum Event {
    Leak(Obligation),
    Overwrite { field: String, class: String, write: usize, src: Var },
}

pub(crate) struct Obligations<'c, 'a> {
    pub ctx: &'c CheckCtx<'a>,
    /// Tracked fields of `this`, with their must-call sets.
    pub tracked: BTreeMap<String, Vec<String>>,
}

fn lib_owning(lib: &LibrarySpec, class: &str, method: Option<&str>, arity: usize, i: usize) -> bool {
    let m = match method {
        Some(m) => lib.method(class, m),
        None => lib.constructor(class, arity),
    };
    m.is_some_and(|m| m.param(i) == ParamMode::Owning)
}

impl<'c, 'a> Obligations<'c, 'a> {
    fn new_obligation(&self, origin: Origin, class: &str, line: u32, v: &Var) -> Option<Obligation> {
        let must: BTreeSet<String> = self.ctx.must_call(class).into_iter().collect();
        (!must.is_empty()).then(|| Obligation { origin, class: class.to_string(), must, line, aliases: BTreeSet::from([v.clone()]), called: BTreeSet::new() })
    }

    /// Whether argument `i` of the call or allocation is an owning position.
    fn owning_arg(&self, instr: &Instr, i: usize) -> bool {
        let lib = self.ctx.libspec;
        match instr {
            Instr::Alloc { class, args, .. } => {
                if lib.is_library_class(class) {
                    return lib_owning(lib, class, None, args.len(), i);
                }
                self.ctx.specs.param_owning.contains(&(MethodKey::ctor(class, args.len()), i))
            }
            Instr::Invoke { class, method, args, .. } => {
                if lib.is_library_class(class) {
                    return lib_owning(lib, class, Some(method), args.len(), i);
                }
                self.ctx.specs.param_owning.contains(&(MethodKey::method(class, method), i))
            }
            _ => false,
        }
    }

    fn discharge(s: &mut State, v: &Var) {
        s.obligations.retain(|o| !o.aliases.contains(v));
    }

    fn kill(s: &mut State, v: &Var, events: &mut Vec<Event>) {
        let old = std::mem::take(&mut s.obligations);
        for mut o in old {
            if o.aliases.remove(v) && o.aliases.is_empty() {
                if !o.satisfied() {
                    events.push(Event::Leak(o));
                }
                continue;
            }
            s.obligations.insert(o);
        }
        for f in s.fields.values_mut() {
            f.aliases.remove(v);
        }
        s.nulls.remove(v);
    }

    fn add_alias(s: &mut State, dst: &Var, src: &Var) {
        s.obligations = std::mem::take(&mut s.obligations)
            .into_iter()
            .map(|mut o| {
                if o.aliases.contains(src) {
                    o.aliases.insert(dst.clone());
                }
                o
            })
            .collect();
        for f in s.fields.values_mut() {
            if f.aliases.contains(src) {
                f.aliases.insert(dst.clone());
            }
        }
        if s.nulls.contains(src) {
            s.nulls.insert(dst.clone());
        }
    }

    fn record_call(s: &mut State, recv: &Var, method: &str) {
        s.obligations = std::mem::take(&mut s.obligations)
            .into_iter()
            .filter_map(|mut o| {
                if o.aliases.contains(recv) {
                    o.called.insert(method.to_string());
                    if o.satisfied() {
                        return None;
                    }
                }
                Some(o)
            })
            .collect();
        for f in s.fields.values_mut() {
            if f.aliases.contains(recv) {
                f.called.insert(method.to_string());
            }
        }
    }

    /// Resets facts of tracked fields a user callee may write.
    fn invalidate(&self, s: &mut State, cfg: &Cfg, callee: &MethodKey) {
        for (name, f) in s.fields.iter_mut() {
            if self.ctx.summary.may_write(callee, &cfg.key.class, name) {
                *f = FieldFact::default();
            }
        }
    }

    pub(crate) fn step(&self, cfg: &Cfg, node: NodeId, input: &State, edge: EdgeKind, events: &mut Vec<Event>) -> Option<State> {
        let mut s = input.clone();
        let instr = cfg.instr(node);
        let line = cfg.nodes[node].line;
        let exc = edge == EdgeKind::Exceptional;
        match instr {
            Instr::Alloc { site, class, args, dst, ordinal } => {
                for (i, a) in args.iter().enumerate() {
                    if self.owning_arg(instr, i) {
                        Self::discharge(&mut s, a);
                    }
                }
                if let Some(k) = callee_of(self.ctx.program, instr) {
                    self.invalidate(&mut s, cfg, &k);
                }
                if !exc {
                    Self::kill(&mut s, dst, events);
                    let origin = Origin::Site { site: *site, ordinal: *ordinal };
                    s.obligations.extend(self.new_obligation(origin, class, line, dst));
                }
            }
            Instr::Invoke { recv, class, method, args, dst, call, ordinal } => {
                if let Recv::Var(r) = recv {
                    Self::record_call(&mut s, r, method);
                }
                for (i, a) in args.iter().enumerate() {
                    if self.owning_arg(instr, i) {
                        Self::discharge(&mut s, a);
                    }
                }
                let callee = callee_of(self.ctx.program, instr);
                if let Some(k) = &callee {
                    self.invalidate(&mut s, cfg, k);
                    if recv.is_this() && *class == cfg.key.class {
                        for e in self.ctx.specs.ensures(class, method) {
                            if let Some(f) = s.fields.get_mut(&e.field) {
                                f.called.extend(e.methods.iter().cloned());
                            }
                        }
                    }
                }
                if !exc {
                    if let Some(d) = dst {
                        Self::kill(&mut s, d, events);
                    }
                    if let Some(k) = callee.filter(|k| !self.ctx.specs.return_notowning.contains(k)) {
                        let ret = self.ctx.program.class(class).and_then(|c| c.method(method)).and_then(|m| m.return_type.clone());
                        let origin = Origin::Call { call: *call, callee: k, ordinal: *ordinal };
                        let tmp = Var::new("$ret");
                        if let Some(o) = ret.and_then(|t| self.new_obligation(origin, &t, line, dst.as_ref().unwrap_or(&tmp))) {
                            match dst {
                                Some(_) => {
                                    s.obligations.insert(o);
                                }
                                None => events.push(Event::Leak(o)),
                            }
                        }
                    }
                }
            }
            Instr::Copy { dst, src } => {
                if dst != src {
                    Self::kill(&mut s, dst, events);
                    Self::add_alias(&mut s, dst, src);
                }
            }
            Instr::LoadField { dst, recv, field, .. } => {
                if exc {
                    return Some(s);
                }
                Self::kill(&mut s, dst, events);
                if recv.is_this() {
                    if let Some(f) = s.fields.get_mut(field) {
                        f.aliases.insert(dst.clone());
                    }
                }
            }
            Instr::StoreField { recv, class, field, src, write } => {
                if exc {
                    return Some(s);
                }
                let owning = self.ctx.specs.is_owning_field(class, field);
                if owning {
                    let decl = self.ctx.program.class(class).and_then(|c| c.field(field));
                    let resource = decl.is_some_and(|d| self.ctx.is_resource(&d.ty));
                    let is_final = decl.is_some_and(|d| d.modifiers.is_final);
                    let unsatisfied = match recv {
                        Recv::Var(v) if v.is_this() => match (s.fields.get(field), self.tracked.get(field)) {
                            (Some(f), Some(m)) => !m.iter().all(|x| f.called.contains(x)),
                            _ => true,
                        },
                        Recv::Var(_) => true,
                        Recv::Static(_) => false,
                    };
                    if resource && !is_final && unsatisfied {
                        events.push(Event::Overwrite { field: field.clone(), class: class.clone(), write: *write, src: src.clone() });
                    }
                    Self::discharge(&mut s, src);
                }
                if recv.is_this() {
                    let null = s.nulls.contains(src);
                    if let (Some(f), Some(m)) = (s.fields.get_mut(field), self.tracked.get(field)) {
                        *f = FieldFact { called: BTreeSet::new(), aliases: BTreeSet::from([src.clone()]) };
                        if null {
                            f.called = m.iter().cloned().collect();
                        }
                    }
                }
            }
            Instr::Return { src: Some(v) } => {
                if !self.ctx.specs.return_notowning.contains(&cfg.key) {
                    Self::discharge(&mut s, v);
                }
            }
            Instr::Assume { var, is_null } => {
                if *is_null {
                    Self::discharge(&mut s, var);
                    for (name, f) in s.fields.iter_mut() {
                        if f.aliases.contains(var) {
                            f.called = self.tracked[name].iter().cloned().collect();
                        }
                    }
                    s.nulls.insert(var.clone());
                } else if s.nulls.contains(var) {
                    return None;
                }
            }
            Instr::Const { dst, value } => {
                Self::kill(&mut s, dst, events);
                if *value == Literal::Null {
                    s.nulls.insert(dst.clone());
                }
            }
            other => {
                if let Some(d) = other.def() {
                    let d = d.clone();
                    Self::kill(&mut s, &d, events);
                }
            }
        }
        Some(s)
    }
}

impl Analysis for Obligations<'_, '_> {
    type Fact = State;

    fn entry_fact(&self, cfg: &Cfg) -> State {
        let mut s = State::default();
        for name in self.tracked.keys() {
            s.fields.insert(name.clone(), FieldFact::default());
        }
        let line = cfg.nodes[cfg.entry].line;
        for (i, p) in cfg.params.iter().enumerate() {
            if !self.ctx.specs.param_owning.contains(&(cfg.key.clone(), i)) {
                continue;
            }
            if let Some(o) = cfg.type_of(p).and_then(|t| self.new_obligation(Origin::Param(i), t, line, p)) {
                s.obligations.insert(o);
            }
        }
        s
    }

    fn join(&self, a: &State, b: &State) -> State {
        let mut fields = BTreeMap::new();
        for (k, fa) in &a.fields {
            if let Some(fb) = b.fields.get(k) {
                fields.insert(
                    k.clone(),
                    FieldFact {
                        called: fa.called.intersection(&fb.called).cloned().collect(),
                        aliases: fa.aliases.intersection(&fb.aliases).cloned().collect(),
                    },
                );
            }
        }
        State { obligations: a.obligations.union(&b.obligations).cloned().collect(), fields, nulls: a.nulls.intersection(&b.nulls).cloned().collect() }
    }

    fn transfer(&self, cfg: &Cfg, node: NodeId, input: &State, edge: EdgeKind) -> Option<State> {
        self.step(cfg, node, input, edge, &mut Vec::new())
    }
}

fn leak_message(o: &Obligation) -> String {
    let ms: Vec<&str> = o.must.iter().filter(|m| !o.called.contains(*m)).map(String::as_str).collect();
    let what = match &o.origin {
        Origin::Param(i) => format!("owning parameter #{i} of type `{}`", o.class),
        Origin::Call { callee, .. } => format!("`{}` returned by `{callee}`", o.class),
        _ => format!("`{}` allocated here", o.class),
    };
    format!("{what} may be leaked: `{}` not called on every path", ms.join("`, `"))
}

/// Solves the obligation analysis for `cfg`.
pub(crate) fn solve_obligations<'c, 'a>(ctx: &'c CheckCtx<'a>, cfg: &Cfg, tracked: BTreeMap<String, Vec<String>>) -> (Obligations<'c, 'a>, Solution<State>) {
    let a = Obligations { ctx, tracked };
    let sol = solve(&a, cfg);
    (a, sol)
}

/// Tracked-field facts on normal exit, joined over every returning path;
/// `None` if the method never returns normally.
pub(crate) fn normal_exit_fields(ctx: &CheckCtx<'_>, cfg: &Cfg, tracked: BTreeMap<String, Vec<String>>) -> Option<BTreeMap<String, FieldFact>> {
    let (a, sol) = solve_obligations(ctx, cfg, tracked);
    let mut acc: Option<State> = None;
    for &(p, k) in cfg.preds(cfg.exit) {
        if k != EdgeKind::Normal {
            continue;
        }
        if let Some(f) = sol.out(p, k) {
            acc = Some(match acc {
                None => f.clone(),
                Some(x) => a.join(&x, f),
            });
        }
    }
    acc.map(|s| s.fields)
}

/// A constructor stores each field initializer before running its body,
/// so write 0 of an initialized field is the initializer and replaces the
/// default `null` of a fresh object.
fn is_initializer_store(ctx: &CheckCtx<'_>, cfg: &Cfg, class: &str, field: &str, write: usize) -> bool {
    write == 0
        && cfg.key.is_ctor()
        && cfg.key.class == class
        && ctx.program.class(class).and_then(|c| c.field(field)).is_some_and(|f| f.initializer.is_some() && !f.modifiers.is_static)
}

pub(crate) fn warnings(ctx: &CheckCtx<'_>, cfg: &Cfg, tracked: BTreeMap<String, Vec<String>>, aliases: &Solution<AliasSets>) -> Vec<Warning> {
    let (a, sol) = solve_obligations(ctx, cfg, tracked);
    let file = &ctx.program.source_name;
    let mut out = Vec::new();
    for node in 0..cfg.nodes.len() {
        let Some(input) = &sol.ins[node] else { continue };
        let mut events = Vec::new();
        for kind in [EdgeKind::Normal, EdgeKind::Exceptional] {
            if cfg.succs(node).iter().any(|&(_, k)| k == kind) {
                a.step(cfg, node, input, kind, &mut events);
            }
        }
        if node == cfg.exit {
            events.extend(input.obligations.iter().filter(|o| !o.satisfied()).cloned().map(Event::Leak));
        }
        for e in events {
            match e {
                Event::Leak(o) => {
                    let msg = leak_message(&o);
                    out.push(Warning::new(WarningKind::UnsatisfiedObligation, file, o.line, &o.class, &cfg.key, o.origin, msg));
                }
                Event::Overwrite { field, class, write, src } => {
                    if is_initializer_store(ctx, cfg, &class, &field, write) {
                        continue;
                    }
                    let ty = ctx.program.class(&class).and_then(|c| c.field(&field)).map(|f| f.ty.clone()).unwrap_or_default();
                    let msg = format!("owning field `{class}.{field}` may be overwritten while its `{ty}` value is still open");
                    let origin = Origin::Field { field: format!("{class}.{field}"), write };
                    let mut w = Warning::new(WarningKind::OwningFieldOverwrite, file, cfg.nodes[node].line, &ty, &cfg.key, origin, msg);
                    w.stored_site = aliases.ins[node].as_ref().and_then(|al| al.site_of(&src));
                    out.push(w);
                }
            }
        }
    }
    out
}
