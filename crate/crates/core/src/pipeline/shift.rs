//! Linking warnings on the transformed program back to the original
//! warnings they stand for.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::cfg::{lower_program, Cfg, Instr, Var};
use crate::checker::{Origin, Warning, WarningKind};
use crate::frontend::{LibrarySpec, ParamMode, Program, SiteId};
use crate::inference::SpecSet;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShiftError {
    #[error("warning {warning} maps to several original warnings: {}", roots.join(", "))]
    AmbiguousMapping { warning: String, roots: Vec<String> },
}

/// Every transformed-program warning paired with its root: the original
/// warning it stands for, or itself.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ShiftMap {
    pub pairs: BTreeMap<String, String>,
    /// Warnings that had several candidate roots, with all of them; only
    /// filled by the lenient builder.
    pub ambiguous: BTreeMap<String, Vec<String>>,
}

impl ShiftMap {
    pub fn roots(&self) -> BTreeSet<&str> {
        self.pairs.values().map(String::as_str).collect()
    }

    /// Shifted warnings mapped to `root`.
    pub fn shifted_of(&self, root: &str) -> Vec<&str> {
        self.pairs.iter().filter(|(_, r)| *r == root).map(|(s, _)| s.as_str()).collect()
    }

    pub fn multiplicity(&self, root: &str) -> usize {
        self.shifted_of(root).len()
    }

    pub fn fixed_count(&self, root: &str, fixed: &BTreeSet<String>) -> usize {
        self.shifted_of(root).into_iter().filter(|s| fixed.contains(*s)).count()
    }
}

/// Allocation sites in `class`'s constructors whose value reaches an owning
/// field of `this`, directly or through local copies and wrapping library
/// constructors. Allocations of user classes are followed into those
/// classes' constructors.
struct Roots<'a> {
    program: &'a Program,
    specs: &'a SpecSet,
    libspec: &'a LibrarySpec,
    cfgs: Vec<Cfg>,
}

impl Roots<'_> {
    /// `(ctor cfg index, site)` pairs, in cfg and site order.
    fn owned_sites(&self, class: &str, visited: &mut BTreeSet<String>) -> BTreeSet<(usize, SiteId)> {
        let mut out = BTreeSet::new();
        if !visited.insert(class.to_string()) {
            return out;
        }
        for (i, cfg) in self.cfgs.iter().enumerate().filter(|(_, c)| c.key.class == class && c.key.is_ctor()) {
            for (site, alloc_class) in self.stored_allocs(cfg, class) {
                if self.program.class(&alloc_class).is_some() {
                    out.extend(self.owned_sites(&alloc_class, visited));
                } else {
                    out.insert((i, site));
                }
            }
        }
        out
    }

    fn stored_allocs(&self, cfg: &Cfg, class: &str) -> BTreeSet<(SiteId, String)> {
        let mut holds: BTreeMap<&Var, BTreeSet<(SiteId, String)>> = BTreeMap::new();
        loop {
            let mut changed = false;
            for n in &cfg.nodes {
                let (dst, incoming): (&Var, BTreeSet<(SiteId, String)>) = match &n.instr {
                    Instr::Alloc { site, class: c, args, dst, .. } => {
                        let mut s = BTreeSet::from([(*site, c.clone())]);
                        if self.program.class(c).is_none() {
                            let ctor = self.libspec.constructor(c, args.len());
                            for (p, a) in args.iter().enumerate() {
                                if ctor.is_some_and(|m| m.param(p) != ParamMode::NotOwning) {
                                    s.extend(holds.get(a).cloned().unwrap_or_default());
                                }
                            }
                        }
                        (dst, s)
                    }
                    Instr::Copy { dst, src } => (dst, holds.get(src).cloned().unwrap_or_default()),
                    _ => continue,
                };
                let e = holds.entry(dst).or_default();
                let before = e.len();
                e.extend(incoming);
                changed |= e.len() != before;
            }
            if !changed {
                break;
            }
        }
        cfg.nodes
            .iter()
            .filter_map(|n| match &n.instr {
                Instr::StoreField { recv, field, src, .. } if recv.is_this() && self.specs.is_owning_field(class, field) => holds.get(src),
                _ => None,
            })
            .flatten()
            .cloned()
            .collect()
    }
}

/// Candidate roots of `w`, in id order; empty when `w` is its own root.
fn candidates(w: &Warning, orig: &[Warning], roots: &Roots<'_>) -> Vec<String> {
    if orig.iter().any(|o| o.id == w.id) {
        return Vec::new();
    }
    let mut out: BTreeSet<String> = BTreeSet::new();
    match (&w.kind, &w.origin) {
        (WarningKind::UnsatisfiedObligation, Origin::Site { .. } | Origin::Call { .. }) if roots.program.class(&w.resource_class).is_some() => {
            for (i, site) in roots.owned_sites(&w.resource_class, &mut BTreeSet::new()) {
                let key = &roots.cfgs[i].key;
                out.extend(orig.iter().filter(|o| &o.method == key && o.site == Some(site)).map(|o| o.id.clone()));
            }
        }
        (WarningKind::OwningFieldOverwrite, _) => {
            if let Some(stored) = w.stored_site {
                out.extend(orig.iter().filter(|o| o.method == w.method && o.site == Some(stored)).map(|o| o.id.clone()));
            }
        }
        _ => {}
    }
    out.into_iter().collect()
}

fn build(orig: &[Warning], xform: &[Warning], program: &Program, specs: &SpecSet, libspec: &LibrarySpec, strict: bool) -> Result<ShiftMap, ShiftError> {
    let roots = Roots { program, specs, libspec, cfgs: lower_program(program, libspec) };
    let mut map = ShiftMap::default();
    for w in xform {
        let c = candidates(w, orig, &roots);
        let root = match c.len() {
            0 => w.id.clone(),
            1 => c[0].clone(),
            _ if strict => return Err(ShiftError::AmbiguousMapping { warning: w.id.clone(), roots: c }),
            _ => {
                map.ambiguous.insert(w.id.clone(), c.clone());
                c[0].clone()
            }
        };
        map.pairs.insert(w.id.clone(), root);
    }
    Ok(map)
}

/// Maps each of `xform`, found on the transformed `program` checked against
/// `specs`, to a warning of `orig` or to itself. A wrapper allocation maps
/// to the original warnings on the library allocations its owning fields
/// hold; an overwrite maps to the original warning on the stored value.
pub fn build_shift_map(orig: &[Warning], xform: &[Warning], program: &Program, specs: &SpecSet, libspec: &LibrarySpec) -> Result<ShiftMap, ShiftError> {
    build(orig, xform, program, specs, libspec, true)
}

/// Like [`build_shift_map`], but an ambiguous warning maps to its first
/// candidate root and is listed in [`ShiftMap::ambiguous`].
pub fn build_shift_map_lenient(orig: &[Warning], xform: &[Warning], program: &Program, specs: &SpecSet, libspec: &LibrarySpec) -> ShiftMap {
    build(orig, xform, program, specs, libspec, false).expect("lenient mapping never fails")
}
