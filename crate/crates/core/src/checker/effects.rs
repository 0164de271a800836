//! Interprocedural field-write summaries.

use std::collections::{BTreeMap, BTreeSet};

use crate::cfg::{Cfg, Instr};
use crate::frontend::{MethodKey, Program};

/// Resolves a call or allocation to the user method or constructor it runs.
pub fn callee_of(program: &Program, instr: &Instr) -> Option<MethodKey> {
    match instr {
        Instr::Invoke { class, method, .. } => {
            program.class(class)?.method(method)?;
            Some(MethodKey::method(class, method))
        }
        Instr::Alloc { class, args, .. } => {
            let c = program.class(class)?;
            if c.constructors.is_empty() && args.is_empty() {
                return Some(MethodKey::ctor(class, 0));
            }
            c.constructor(args.len())?;
            Some(MethodKey::ctor(class, args.len()))
        }
        _ => None,
    }
}

/// For every user method, the (class, field) pairs it or any transitive
/// callee may store to, on any receiver.
#[derive(Debug, Clone, Default)]
pub struct WriteSummary {
    writes: BTreeMap<MethodKey, BTreeSet<(String, String)>>,
}

impl WriteSummary {
    pub fn build(program: &Program, cfgs: &[Cfg]) -> Self {
        let mut writes: BTreeMap<MethodKey, BTreeSet<(String, String)>> = BTreeMap::new();
        let mut calls: BTreeMap<MethodKey, BTreeSet<MethodKey>> = BTreeMap::new();
        for cfg in cfgs {
            let w = writes.entry(cfg.key.clone()).or_default();
            let cs = calls.entry(cfg.key.clone()).or_default();
            for n in &cfg.nodes {
                if let Instr::StoreField { class, field, .. } = &n.instr {
                    w.insert((class.clone(), field.clone()));
                }
                if let Some(k) = callee_of(program, &n.instr) {
                    cs.insert(k);
                }
            }
        }
        loop {
            let mut changed = false;
            for (k, callees) in &calls {
                let mut add = BTreeSet::new();
                for c in callees {
                    if let Some(ws) = writes.get(c) {
                        add.extend(ws.iter().cloned());
                    }
                }
                let w = writes.get_mut(k).unwrap();
                let before = w.len();
                w.extend(add);
                changed |= w.len() != before;
            }
            if !changed {
                break;
            }
        }
        WriteSummary { writes }
    }

    pub fn may_write(&self, key: &MethodKey, class: &str, field: &str) -> bool {
        self.writes.get(key).is_some_and(|w| w.contains(&(class.to_string(), field.to_string())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfg::lower_program;
    use crate::frontend::{default_library_spec, parse};

    #[test]
    fn writes_propagate_through_calls() {
        let p = parse("t.mj", "class A { S f; void a() { b(); } void b() { c(); } void c() { f = null; } void d() { } }").unwrap();
        let cfgs = lower_program(&p, &default_library_spec());
        let s = WriteSummary::build(&p, &cfgs);
        assert!(s.may_write(&MethodKey::method("A", "a"), "A", "f"));
        assert!(!s.may_write(&MethodKey::method("A", "d"), "A", "f"));
    }
}
