//! Intraprocedural must-alias partitions of locals.

use std::collections::BTreeSet;

use super::{solve, Analysis, Cfg, EdgeKind, Instr, NodeId, Solution, Var};
use crate::frontend::SiteId;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct AliasGroup {
    pub vars: BTreeSet<Var>,
    /// The allocation site every member definitely holds.
    pub site: Option<SiteId>,
}

/// A partition of locals into must-alias groups. Locals absent from every
/// group are untagged singletons.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AliasSets {
    groups: Vec<AliasGroup>,
}

impl AliasSets {
    pub fn groups(&self) -> &[AliasGroup] {
        &self.groups
    }

    pub fn group_of(&self, v: &Var) -> Option<&AliasGroup> {
        self.groups.iter().find(|g| g.vars.contains(v))
    }

    pub fn site_of(&self, v: &Var) -> Option<SiteId> {
        self.group_of(v).and_then(|g| g.site)
    }

    pub fn aliased(&self, a: &Var, b: &Var) -> bool {
        a == b || self.group_of(a).is_some_and(|g| g.vars.contains(b))
    }

    /// Every local known to alias `v`, including `v`.
    pub fn aliases_of(&self, v: &Var) -> BTreeSet<Var> {
        match self.group_of(v) {
            Some(g) => g.vars.clone(),
            None => BTreeSet::from([v.clone()]),
        }
    }

    fn remove(&mut self, v: &Var) {
        for g in &mut self.groups {
            g.vars.remove(v);
        }
        self.canon();
    }

    fn canon(&mut self) {
        self.groups.retain(|g| !g.vars.is_empty() && (g.vars.len() > 1 || g.site.is_some()));
        self.groups.sort();
    }

    pub fn assign_alloc(&mut self, dst: &Var, site: SiteId) {
        self.remove(dst);
        self.groups.push(AliasGroup { vars: BTreeSet::from([dst.clone()]), site: Some(site) });
        self.canon();
    }

    pub fn assign_copy(&mut self, dst: &Var, src: &Var) {
        if dst == src {
            return;
        }
        self.remove(dst);
        match self.groups.iter_mut().find(|g| g.vars.contains(src)) {
            Some(g) => {
                g.vars.insert(dst.clone());
            }
            None => self.groups.push(AliasGroup { vars: BTreeSet::from([src.clone(), dst.clone()]), site: None }),
        }
        self.canon();
    }

    pub fn kill(&mut self, v: &Var) {
        self.remove(v);
    }

    /// Meet of two partitions: two locals stay aliased only if aliased in
    /// both; a tag survives only if both sides agree on it.
    pub fn meet(&self, other: &AliasSets) -> AliasSets {
        let mut groups = Vec::new();
        for a in &self.groups {
            for b in &other.groups {
                let vars: BTreeSet<Var> = a.vars.intersection(&b.vars).cloned().collect();
                if !vars.is_empty() {
                    let site = if a.site == b.site { a.site } else { None };
                    groups.push(AliasGroup { vars, site });
                }
            }
        }
        let mut out = AliasSets { groups };
        out.canon();
        out
    }

    pub fn apply(&mut self, instr: &Instr, edge: EdgeKind) {
        if edge == EdgeKind::Exceptional && matches!(instr, Instr::Alloc { .. } | Instr::Invoke { .. } | Instr::LoadField { .. }) {
            return;
        }
        match instr {
            Instr::Alloc { dst, site, .. } => self.assign_alloc(dst, *site),
            Instr::Copy { dst, src } => self.assign_copy(dst, src),
            other => {
                if let Some(d) = other.def() {
                    self.kill(&d.clone());
                }
            }
        }
    }
}

struct MustAlias;

impl Analysis for MustAlias {
    type Fact = AliasSets;

    fn entry_fact(&self, _: &Cfg) -> AliasSets {
        AliasSets::default()
    }

    fn join(&self, a: &AliasSets, b: &AliasSets) -> AliasSets {
        a.meet(b)
    }

    fn transfer(&self, cfg: &Cfg, node: NodeId, input: &AliasSets, edge: EdgeKind) -> Option<AliasSets> {
        let mut f = input.clone();
        f.apply(cfg.instr(node), edge);
        Some(f)
    }
}

/// Alias partitions before and after every node.
pub fn must_alias(cfg: &Cfg) -> Solution<AliasSets> {
    solve(&MustAlias, cfg)
}
