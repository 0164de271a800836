//! Inference of ownership and must-call specifications for wrapper classes.
//!
//! A private resource field is owning when some instance method of its class
//! calls every must-call method of the field on all normal paths. That
//! method becomes the class's finalizer, gains an ensures annotation for each
//! field it disposes, and makes the class a resource type, which can in turn
//! make fields of other classes owning. Rules are applied to a fixed point.

mod specs;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::cfg::{lower_program, Cfg};
use crate::checker::obligations::normal_exit_fields;
use crate::checker::{check_program, filter_constructor_first_writes, CheckCtx, Warning, WriteSummary};
use crate::frontend::*;

pub use specs::{ClassSpec, EnsuresSpec, FieldSpec, Ownership, SpecSet};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InferenceError {
    #[error("inferred {inferred} on {target} contradicts declared {declared}")]
    AnnotationConflict { target: String, declared: String, inferred: String },
}

/// Private instance fields of `class` whose type has must-call methods and
/// that are not declared non-owning, with those methods.
fn candidate_fields(ctx: &CheckCtx<'_>, class: &ClassDecl) -> BTreeMap<String, Vec<String>> {
    class
        .fields
        .iter()
        .filter(|f| f.modifiers.is_private && !f.modifiers.is_static)
        .filter(|f| !matches!(ctx.specs.field_ownership.get(&(class.name.clone(), f.name.clone())), Some(FieldSpec { ownership: Ownership::NotOwning, .. })))
        .map(|f| (f.name.clone(), ctx.must_call(&f.ty)))
        .filter(|(_, m)| !m.is_empty())
        .collect()
}

/// Fields `cfg` disposes of on every normal path.
fn disposed(ctx: &CheckCtx<'_>, cfg: &Cfg, candidates: &BTreeMap<String, Vec<String>>) -> BTreeSet<String> {
    let Some(facts) = normal_exit_fields(ctx, cfg, candidates.clone()) else { return BTreeSet::new() };
    candidates.iter().filter(|(f, must)| facts.get(*f).is_some_and(|x| must.iter().all(|m| x.called.contains(m)))).map(|(f, _)| f.clone()).collect()
}

/// Picks the method disposing the most fields; ties go to `close`, then to
/// the lexicographically smallest name.
fn choose_finalizer(found: Vec<(String, BTreeSet<String>)>) -> Option<(String, BTreeSet<String>)> {
    found
        .into_iter()
        .filter(|(_, d)| !d.is_empty())
        .min_by(|(a, da), (b, db)| db.len().cmp(&da.len()).then_with(|| (a != "close").cmp(&(b != "close"))).then_with(|| a.cmp(b)))
}

/// Infers specifications for every user class; declared ones are kept.
pub fn infer_specs(program: &Program, libspec: &LibrarySpec) -> SpecSet {
    let cfgs = lower_program(program, libspec);
    let summary = WriteSummary::build(program, &cfgs);
    let mut specs = SpecSet::declared(program);
    loop {
        let mut next = specs.clone();
        let ctx = CheckCtx { program, specs: &specs, libspec, summary: &summary };
        for class in &program.classes {
            let candidates = candidate_fields(&ctx, class);
            if candidates.is_empty() {
                continue;
            }
            let declared_mc = specs.class_must_call(&class.name).map(<[String]>::to_vec);
            let found: Vec<(String, BTreeSet<String>)> = cfgs
                .iter()
                .filter(|c| c.key.class == class.name && !c.key.is_ctor() && !c.is_static)
                .filter(|c| declared_mc.as_ref().is_none_or(|ms| ms.contains(&c.key.name)))
                .map(|c| (c.key.name.clone(), disposed(&ctx, c, &candidates)))
                .collect();
            let Some((finalizer, fields)) = choose_finalizer(found) else { continue };
            next.class_mustcall.entry(class.name.clone()).or_insert_with(|| ClassSpec { must_call: vec![finalizer.clone()], provenance: Provenance::Inferred });
            for f in &fields {
                next.field_ownership
                    .entry((class.name.clone(), f.clone()))
                    .or_insert(FieldSpec { ownership: Ownership::Owning, provenance: Provenance::Inferred });
                let es = next.method_ensures.entry((class.name.clone(), finalizer.clone())).or_default();
                if !es.iter().any(|e| &e.field == f) {
                    es.push(EnsuresSpec { field: f.clone(), methods: candidates[f].clone(), provenance: Provenance::Inferred });
                }
            }
        }
        if next == specs {
            return specs;
        }
        specs = next;
    }
}

/// Infers specifications and checks against them, dropping overwrite
/// warnings on provably-first constructor writes.
pub fn check_with_inference(program: &Program, libspec: &LibrarySpec) -> (SpecSet, Vec<Warning>) {
    let specs = infer_specs(program, libspec);
    let warnings = filter_constructor_first_writes(check_program(program, &specs, libspec), program);
    (specs, warnings)
}

fn kind_name(k: &AnnotationKind) -> String {
    printer::annotation(&Annotation::declared(k.clone()))
}

/// Inserts `new` unless an annotation of the same family is present; a
/// present one must agree.
fn place(anns: &mut Vec<Annotation>, new: Annotation, target: String, front: bool) -> Result<(), InferenceError> {
    let same_family = |a: &AnnotationKind| match (&new.kind, a) {
        (AnnotationKind::MustCall(_), AnnotationKind::MustCall(_)) => true,
        (AnnotationKind::Owning | AnnotationKind::NotOwning, AnnotationKind::Owning | AnnotationKind::NotOwning) => true,
        (AnnotationKind::EnsuresCalledMethods { field: x, .. }, AnnotationKind::EnsuresCalledMethods { field: y, .. }) => x == y,
        _ => false,
    };
    if let Some(existing) = anns.iter().find(|a| same_family(&a.kind)) {
        if existing.kind == new.kind {
            return Ok(());
        }
        return Err(InferenceError::AnnotationConflict { target, declared: kind_name(&existing.kind), inferred: kind_name(&new.kind) });
    }
    if front {
        anns.insert(0, new);
    } else {
        anns.push(new);
    }
    Ok(())
}

/// Writes the non-declared entries of `specs` into the source as annotations.
pub fn write_specs(program: &Program, specs: &SpecSet) -> Result<Program, InferenceError> {
    let mut p = program.clone();
    for class in &mut p.classes {
        if let Some(s) = specs.class_mustcall.get(&class.name).filter(|s| s.provenance != Provenance::Declared) {
            let a = Annotation { kind: AnnotationKind::MustCall(s.must_call.clone()), provenance: s.provenance };
            place(&mut class.annotations, a, format!("class {}", class.name), true)?;
        }
        for f in &mut class.fields {
            let Some(s) = specs.field_ownership.get(&(class.name.clone(), f.name.clone())) else { continue };
            if s.provenance == Provenance::Declared {
                continue;
            }
            let kind = match s.ownership {
                Ownership::Owning => AnnotationKind::Owning,
                Ownership::NotOwning => AnnotationKind::NotOwning,
            };
            place(&mut f.annotations, Annotation { kind, provenance: s.provenance }, format!("field {}.{}", class.name, f.name), false)?;
        }
        for m in &mut class.methods {
            for e in specs.ensures(&class.name, &m.name) {
                if e.provenance == Provenance::Declared {
                    continue;
                }
                let kind = AnnotationKind::EnsuresCalledMethods { field: e.field.clone(), methods: e.methods.clone() };
                place(&mut m.annotations, Annotation { kind, provenance: e.provenance }, format!("method {}.{}", class.name, m.name), false)?;
            }
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests;
