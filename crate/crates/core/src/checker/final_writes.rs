//! The final-field assignment rules a compiler would enforce.

use std::fmt;

use crate::frontend::{walk, Block, ClassDecl, MethodDecl, MethodKey, Program, Stmt, StmtKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompileError {
    pub class: String,
    pub field: String,
    pub method: Option<MethodKey>,
    pub message: String,
}

impl fmt::Display for CompileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

/// Writes to `this.field` or to an unshadowed `field` in `m`. Writes
/// through other receivers are not attributed.
fn is_field_write(m: &MethodDecl, s: &Stmt, field: &str) -> bool {
    matches!(&s.kind, StmtKind::Assign { target, .. } if walk::targets_field(m, target, field))
}

const MANY: u32 = 1 << 16;

/// Write counts along the paths of a statement list.
#[derive(Debug, Clone, Copy)]
struct Counts {
    /// Fewest writes on a normally completing path.
    min: u32,
    /// Most writes on any path, including ones that return early.
    peak: u32,
    completes: bool,
}

struct Walker<'a> {
    m: &'a MethodDecl,
    field: &'a str,
    /// Write counts at each `return`.
    returns: Vec<u32>,
}

impl Walker<'_> {
    fn block(&mut self, b: &Block, before: u32) -> Counts {
        let mut c = Counts { min: 0, peak: 0, completes: true };
        for s in &b.stmts {
            let x = self.stmt(s, before + c.min);
            c.peak = c.peak.max(c.min + x.peak).min(MANY);
            c.min += x.min;
            if !x.completes {
                c.completes = false;
                break;
            }
        }
        c
    }

    fn stmt(&mut self, s: &Stmt, before: u32) -> Counts {
        match &s.kind {
            StmtKind::Assign { .. } if is_field_write(self.m, s, self.field) => Counts { min: 1, peak: 1, completes: true },
            StmtKind::If { then_block, else_block, .. } => {
                let a = self.block(then_block, before);
                let b = match else_block {
                    Some(e) => self.block(e, before),
                    None => Counts { min: 0, peak: 0, completes: true },
                };
                let min = match (a.completes, b.completes) {
                    (true, true) => a.min.min(b.min),
                    (true, false) => a.min,
                    (false, true) => b.min,
                    (false, false) => 0,
                };
                Counts { min, peak: a.peak.max(b.peak), completes: a.completes || b.completes }
            }
            StmtKind::While { body, .. } => {
                let b = self.block(body, before);
                Counts { min: 0, peak: if b.peak > 0 { MANY } else { 0 }, completes: true }
            }
            StmtKind::Try { body, catch, finally } => {
                let b = self.block(body, before);
                let (mut min, mut peak, mut completes) = (b.min, b.peak, b.completes);
                if let Some(c) = catch {
                    // The body may fail after any prefix of its writes.
                    let h = self.block(&c.body, before + b.peak);
                    peak = (b.peak + h.peak).min(MANY);
                    if h.completes {
                        min = if completes { min.min(h.min) } else { h.min };
                        completes = true;
                    }
                }
                if let Some(f) = finally {
                    let x = self.block(f, before + min);
                    peak = (peak + x.peak).min(MANY);
                    min += x.min;
                    completes &= x.completes;
                }
                Counts { min, peak, completes }
            }
            StmtKind::Return(_) => {
                self.returns.push(before);
                Counts { min: 0, peak: 0, completes: false }
            }
            _ => Counts { min: 0, peak: 0, completes: true },
        }
    }
}

fn count_writes(m: &MethodDecl, field: &str) -> usize {
    let mut n = 0;
    walk::block_stmts(&m.body, &mut |s| {
        if is_field_write(m, s, field) {
            n += 1;
        }
    });
    n
}

fn class_errors(c: &ClassDecl, out: &mut Vec<CompileError>) {
    for f in c.fields.iter().filter(|f| f.modifiers.is_final) {
        let err = |method: Option<MethodKey>, message: String| CompileError { class: c.name.clone(), field: f.name.clone(), method, message };
        for (key, m) in c.members() {
            let in_ctor = m.is_constructor() && !f.modifiers.is_static;
            let n = count_writes(m, &f.name);
            if n == 0 && !in_ctor {
                continue;
            }
            if !in_ctor || f.initializer.is_some() {
                for _ in 0..n {
                    out.push(err(Some(key.clone()), format!("cannot assign a value to final field `{}.{}` in `{key}`", c.name, f.name)));
                }
                continue;
            }
            let mut w = Walker { m, field: &f.name, returns: Vec::new() };
            let counts = w.block(&m.body, 0);
            if counts.peak > 1 {
                out.push(err(Some(key.clone()), format!("final field `{}.{}` may be assigned more than once in `{key}`", c.name, f.name)));
            }
            let mut ends = w.returns;
            if counts.completes {
                ends.push(counts.min);
            }
            if ends.contains(&0) {
                out.push(err(Some(key.clone()), format!("final field `{}.{}` may not be initialized by `{key}`", c.name, f.name)));
            }
        }
        let ctor_less = c.constructors.is_empty() && !f.modifiers.is_static;
        if f.initializer.is_none() && (f.modifiers.is_static || ctor_less) {
            out.push(err(None, format!("final field `{}.{}` is never initialized", c.name, f.name)));
        }
    }
}

/// Every violation of the single-assignment rule for final fields. Empty
/// means the program would compile.
pub fn reject_final_writes(program: &Program) -> Vec<CompileError> {
    let mut out = Vec::new();
    for c in &program.classes {
        class_errors(c, &mut out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse;

    fn errors(src: &str) -> Vec<CompileError> {
        reject_final_writes(&parse("t.mj", src).unwrap())
    }

    #[test]
    fn one_write_per_constructor_is_clean() {
        assert!(errors("class A { private final S s; A() { s = new S(); } A(S x) { s = x; } }").is_empty());
    }

    #[test]
    fn write_in_method_is_rejected() {
        let e = errors("class A { private final S s; A() { s = null; } void m() { s = null; } }");
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].method, Some(MethodKey::method("A", "m")));
    }

    #[test]
    fn branches_and_loops() {
        assert!(errors("class A { private final S s; A(int c) { if (c == 1) { s = null; } else { s = null; } } }").is_empty());
        assert_eq!(errors("class A { private final S s; A(int c) { if (c == 1) { s = null; } } }").len(), 1);
        assert_eq!(errors("class A { private final S s; A(int c) { s = null; while (c == 1) { s = null; } } }").len(), 1);
    }

    #[test]
    fn try_finally_temp_pattern_is_clean() {
        let src = "class A { private final ServerSocket s; A(int p) { ServerSocket t = null; \
                   try { t = new ServerSocket(p); } catch (Exception e) { } finally { s = t; } } }";
        assert!(errors(src).is_empty());
        let twice = "class A { private final S s; A() { try { s = null; } catch (Exception e) { s = null; } } }";
        assert_eq!(errors(twice).len(), 1);
    }

    #[test]
    fn initializer_forbids_any_other_write() {
        assert_eq!(errors("class A { private final S s = null; A() { s = null; } }").len(), 1);
        assert!(errors("class A { private final S s = null; }").is_empty());
        assert_eq!(errors("class A { private final S s; }").len(), 1);
    }
}
