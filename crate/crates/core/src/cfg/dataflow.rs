//! Forward dataflow over a [`Cfg`] with edge-kind dependent transfer.
//!
//! Facts are `Option<F>`; `None` marks a point no path reaches. A transfer
//! function may return `None` on an edge the instruction cannot take.

use super::{Cfg, EdgeKind, NodeId};

pub trait Analysis {
    type Fact: Clone + PartialEq;

    fn entry_fact(&self, cfg: &Cfg) -> Self::Fact;

    fn join(&self, a: &Self::Fact, b: &Self::Fact) -> Self::Fact;

    /// Fact leaving `node` along an edge of kind `edge`.
    fn transfer(&self, cfg: &Cfg, node: NodeId, input: &Self::Fact, edge: EdgeKind) -> Option<Self::Fact>;
}

#[derive(Debug, Clone)]
pub struct Solution<F> {
    pub ins: Vec<Option<F>>,
    pub out_normal: Vec<Option<F>>,
    pub out_exc: Vec<Option<F>>,
}

impl<F> Solution<F> {
    pub fn out(&self, n: NodeId, kind: EdgeKind) -> Option<&F> {
        match kind {
            EdgeKind::Normal => self.out_normal[n].as_ref(),
            EdgeKind::Exceptional => self.out_exc[n].as_ref(),
        }
    }
}

fn join_opt<A: Analysis>(a: &A, acc: Option<A::Fact>, f: Option<&A::Fact>) -> Option<A::Fact> {
    match (acc, f) {
        (None, f) => f.cloned(),
        (acc, None) => acc,
        (Some(x), Some(y)) => Some(a.join(&x, y)),
    }
}

/// Round-robin iteration in reverse postorder until no fact changes.
pub fn solve<A: Analysis>(analysis: &A, cfg: &Cfg) -> Solution<A::Fact> {
    let n = cfg.nodes.len();
    let mut sol = Solution { ins: vec![None; n], out_normal: vec![None; n], out_exc: vec![None; n] };
    let order = cfg.reverse_postorder();
    let entry_fact = analysis.entry_fact(cfg);
    let mut changed = true;
    while changed {
        changed = false;
        for &node in &order {
            let mut input = if node == cfg.entry { Some(entry_fact.clone()) } else { None };
            for &(p, k) in cfg.preds(node) {
                input = join_opt(analysis, input, sol.out(p, k));
            }
            let (on, oe) = match &input {
                None => (None, None),
                Some(f) => (analysis.transfer(cfg, node, f, EdgeKind::Normal), analysis.transfer(cfg, node, f, EdgeKind::Exceptional)),
            };
            if input != sol.ins[node] || on != sol.out_normal[node] || oe != sol.out_exc[node] {
                changed = true;
            }
            sol.ins[node] = input;
            sol.out_normal[node] = on;
            sol.out_exc[node] = oe;
        }
    }
    sol
}

#[cfg(test)]
mod tests {
    use super::super::{lower, Instr};
    use super::*;
    use crate::frontend::{default_library_spec, parse};
    use std::collections::BTreeSet;

    /// Definitely-called method names on any receiver.
    struct Called;

    impl Analysis for Called {
        type Fact = BTreeSet<String>;

        fn entry_fact(&self, _: &Cfg) -> Self::Fact {
            BTreeSet::new()
        }

        fn join(&self, a: &Self::Fact, b: &Self::Fact) -> Self::Fact {
            a.intersection(b).cloned().collect()
        }

        fn transfer(&self, cfg: &Cfg, node: NodeId, input: &Self::Fact, _: EdgeKind) -> Option<Self::Fact> {
            let mut f = input.clone();
            if let Instr::Invoke { method, .. } = cfg.instr(node) {
                f.insert(method.clone());
            }
            Some(f)
        }
    }

    #[test]
    fn loop_reaches_fixpoint_with_intersection() {
        let p = parse("t.mj", "class A { void m(S s, int k) { s.a(); while (k == 0) { s.b(); } s.c(); } }").unwrap();
        let lib = default_library_spec();
        let cfg = lower(&p, &lib, &p.classes[0], &p.classes[0].methods[0]);
        let sol = solve(&Called, &cfg);
        let at_exit = sol.ins[cfg.exit].clone().unwrap();
        // Exceptional paths from `a` reach the exit too; on normal paths a and c are both called.
        assert!(!at_exit.contains("b"));
        let ret = (0..cfg.nodes.len()).find(|&n| matches!(cfg.instr(n), Instr::Return { .. })).unwrap();
        let at_ret = sol.ins[ret].clone().unwrap();
        assert!(at_ret.contains("a") && at_ret.contains("c") && !at_ret.contains("b"));
    }
}
