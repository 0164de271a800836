//! Seeded generator of small runnable MiniJ programs for differential
//! testing of the checker, the transforms and the repairer.
//!
//! Every generated program parses, has a `main` that calls each generated
//! method with both branch selectors, and terminates: the only loop runs
//! at most once. Resources are never used after they are closed and never
//! dereferenced while possibly null.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A library resource the generator draws from.
struct Lib {
    class: &'static str,
    args: &'static str,
    ops: &'static [&'static str],
    finalizer: &'static str,
}

const LIBS: &[Lib] = &[
    Lib { class: "Socket", args: "", ops: &["send(1)", "receive()"], finalizer: "close" },
    Lib { class: "FileInputStream", args: "\"in.txt\"", ops: &["read()"], finalizer: "close" },
    Lib { class: "PrintStream", args: "\"out.txt\"", ops: &["println(\"x\")", "flush()"], finalizer: "close" },
    Lib { class: "Puppeteer", args: "\"host\"", ops: &["act()"], finalizer: "finish" },
];

#[derive(Clone)]
struct Local {
    name: String,
    lib: usize,
    /// Definitely holds an open resource.
    usable: bool,
}

struct Gen {
    rng: ChaCha8Rng,
    out: String,
    fresh: usize,
    /// Wrapper classes: (name, wrapped lib, has a `close`).
    wrappers: Vec<(String, usize, bool)>,
    /// Static helpers of `Main`: (name, kind).
    helpers: Vec<(String, Helper)>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Helper {
    /// Takes a resource and closes it.
    Closes(usize),
    /// Takes a resource and only uses it.
    Uses(usize),
    /// Returns a fresh resource.
    Makes(usize),
}

impl Gen {
    fn name(&mut self, prefix: &str) -> String {
        self.fresh += 1;
        format!("{prefix}{}", self.fresh)
    }

    fn line(&mut self, depth: usize, s: &str) {
        let _ = writeln!(self.out, "{}{s}", "  ".repeat(depth));
    }

    fn wrapper(&mut self, i: usize) {
        let lib = self.rng.gen_range(0..LIBS.len());
        let l = &LIBS[lib];
        let name = format!("W{i}");
        let injected = self.rng.gen_bool(0.5);
        let closes = self.rng.gen_bool(0.6);
        let resets = self.rng.gen_bool(0.3);
        self.line(0, &format!("class {name} {{"));
        self.line(1, &format!("private {} res;", l.class));
        if injected {
            self.line(1, &format!("{name}({} r) {{", l.class));
            self.line(2, "res = r;");
        } else {
            self.line(1, &format!("{name}() {{"));
            self.line(2, &format!("res = new {}({});", l.class, l.args));
        }
        self.line(1, "}");
        self.line(1, "void use() {");
        self.line(2, &format!("res.{};", l.ops[0]));
        self.line(1, "}");
        if resets && !injected {
            self.line(1, "void reset() {");
            self.line(2, &format!("res = new {}({});", l.class, l.args));
            self.line(1, "}");
        }
        if closes {
            self.line(1, &format!("void close() {{ res.{}(); }}", l.finalizer));
        }
        self.line(0, "}");
        self.wrappers.push((name, lib, closes));
    }

    fn helper(&mut self) {
        let lib = self.rng.gen_range(0..LIBS.len());
        let l = &LIBS[lib];
        let name = self.name("h");
        let kind = match self.rng.gen_range(0..3) {
            0 => Helper::Closes(lib),
            1 => Helper::Uses(lib),
            _ => Helper::Makes(lib),
        };
        match kind {
            Helper::Closes(_) => self.line(1, &format!("static void {name}({} r) {{ r.{}(); }}", l.class, l.finalizer)),
            Helper::Uses(_) => self.line(1, &format!("static void {name}({} r) {{ r.{}; }}", l.class, l.ops[0])),
            Helper::Makes(_) => {
                self.line(1, &format!("static {} {name}() {{", l.class));
                self.line(2, &format!("{} r = new {}({});", l.class, l.class, l.args));
                self.line(2, "return r;");
                self.line(1, "}");
            }
        }
        self.helpers.push((name, kind));
    }

    fn stmts(&mut self, depth: usize, locals: &mut Vec<Local>, budget: usize) {
        for _ in 0..budget {
            self.stmt(depth, locals);
        }
    }

    fn usable(&mut self, locals: &[Local]) -> Option<usize> {
        let idx: Vec<usize> = (0..locals.len()).filter(|&i| locals[i].usable).collect();
        idx.choose(&mut self.rng).copied()
    }

    fn stmt(&mut self, depth: usize, locals: &mut Vec<Local>) {
        match self.rng.gen_range(0..14) {
            0..=2 => {
                let lib = self.rng.gen_range(0..LIBS.len());
                let l = &LIBS[lib];
                let name = self.name("r");
                self.line(depth, &format!("{} {name} = new {}({});", l.class, l.class, l.args));
                locals.push(Local { name, lib, usable: true });
            }
            3 | 4 => {
                if let Some(i) = self.usable(locals) {
                    let op = *LIBS[locals[i].lib].ops.choose(&mut self.rng).expect("every lib has ops");
                    self.line(depth, &format!("{}.{op};", locals[i].name));
                }
            }
            5 | 6 => {
                if let Some(i) = self.usable(locals) {
                    self.line(depth, &format!("{}.{}();", locals[i].name, LIBS[locals[i].lib].finalizer));
                    locals[i].usable = false;
                }
            }
            7 => {
                if let Some(i) = self.usable(locals) {
                    let (n, f) = (locals[i].name.clone(), LIBS[locals[i].lib].finalizer);
                    self.line(depth, "if (p == 1) {");
                    self.line(depth + 1, &format!("{n}.{f}();"));
                    self.line(depth, "}");
                    locals[i].usable = false;
                }
            }
            8 => {
                let mut inner = locals.clone();
                self.line(depth, "if (p == 0) {");
                self.stmts(depth + 1, &mut inner, 2);
                self.line(depth, "} else {");
                let mut other = locals.clone();
                self.stmts(depth + 1, &mut other, 1);
                self.line(depth, "}");
                for (l, (a, b)) in locals.iter_mut().zip(inner.iter().zip(other.iter())) {
                    l.usable = l.usable && a.usable && b.usable;
                }
            }
            9 => {
                if let Some(i) = self.usable(locals) {
                    let (n, l) = (locals[i].name.clone(), &LIBS[locals[i].lib]);
                    self.line(depth, "try {");
                    self.line(depth + 1, &format!("{n}.{};", l.ops[0]));
                    self.line(depth, "} finally {");
                    self.line(depth + 1, &format!("{n}.{}();", l.finalizer));
                    self.line(depth, "}");
                    locals[i].usable = false;
                }
            }
            10 => {
                if let Some(i) = self.usable(locals) {
                    self.line(depth, &format!("{} = null;", locals[i].name));
                    locals[i].usable = false;
                }
            }
            11 => {
                if self.helpers.is_empty() {
                    return;
                }
                let (h, kind) = self.helpers[self.rng.gen_range(0..self.helpers.len())].clone();
                match kind {
                    Helper::Makes(lib) => {
                        let name = self.name("r");
                        self.line(depth, &format!("{} {name} = Main.{h}();", LIBS[lib].class));
                        locals.push(Local { name, lib, usable: true });
                    }
                    Helper::Closes(lib) | Helper::Uses(lib) => {
                        if let Some(i) = (0..locals.len()).find(|&i| locals[i].usable && locals[i].lib == lib) {
                            self.line(depth, &format!("Main.{h}({});", locals[i].name));
                            if matches!(kind, Helper::Closes(_)) {
                                locals[i].usable = false;
                            }
                        }
                    }
                }
            }
            12 => {
                if self.wrappers.is_empty() {
                    return;
                }
                let (w, lib, closes) = self.wrappers[self.rng.gen_range(0..self.wrappers.len())].clone();
                let name = self.name("w");
                let injected = self.out.contains(&format!("{w}({} r)", LIBS[lib].class));
                if injected {
                    let Some(i) = (0..locals.len()).find(|&i| locals[i].usable && locals[i].lib == lib) else { return };
                    self.line(depth, &format!("{w} {name} = new {w}({});", locals[i].name));
                    locals[i].usable = false;
                } else {
                    self.line(depth, &format!("{w} {name} = new {w}();"));
                }
                self.line(depth, &format!("{name}.use();"));
                if closes && self.rng.gen_bool(0.5) {
                    self.line(depth, &format!("{name}.close();"));
                }
            }
            _ => {
                if let Some(i) = self.usable(locals) {
                    let (n, l) = (locals[i].name.clone(), &LIBS[locals[i].lib]);
                    self.line(depth, &format!("while ({n} != null) {{"));
                    self.line(depth + 1, &format!("{n}.{};", l.ops[0]));
                    self.line(depth + 1, &format!("{n}.{}();", l.finalizer));
                    self.line(depth + 1, &format!("{n} = null;"));
                    self.line(depth, "}");
                    locals[i].usable = false;
                }
            }
        }
    }
}

/// The program generated from `seed`; equal seeds give equal text.
pub fn generate(seed: u64) -> String {
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed), out: String::new(), fresh: 0, wrappers: Vec::new(), helpers: Vec::new() };
    for i in 0..g.rng.gen_range(0..3) {
        g.wrapper(i);
    }
    g.line(0, "class Main {");
    for _ in 0..g.rng.gen_range(0..3) {
        g.helper();
    }
    let methods = g.rng.gen_range(1..4);
    for m in 0..methods {
        g.line(1, &format!("static void m{m}(int p) {{"));
        let mut locals = Vec::new();
        let budget = g.rng.gen_range(2..8);
        g.stmts(2, &mut locals, budget);
        g.line(1, "}");
    }
    g.line(1, "static void main() {");
    for m in 0..methods {
        g.line(2, &format!("Main.m{m}(0);"));
        g.line(2, &format!("Main.m{m}(1);"));
    }
    g.line(1, "}");
    g.line(0, "}");
    g.out
}

/// `count` programs from consecutive seeds starting at `first`, named
/// `fuzz_<seed>.mj`.
pub fn corpus(first: u64, count: u64) -> Vec<(String, String)> {
    (first..first + count).map(|s| (format!("fuzz_{s}.mj"), generate(s))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{default_library_spec, parse};
    use crate::oracle::{run, RunStatus, DEFAULT_STEP_LIMIT};

    #[test]
    fn generated_programs_parse_and_run_cleanly() {
        let lib = default_library_spec();
        for (name, text) in corpus(0, 100) {
            let p = parse(&name, &text).unwrap_or_else(|e| panic!("{e}\n{text}"));
            let r = run(&p, &lib, DEFAULT_STEP_LIMIT).unwrap();
            assert_eq!(r.status, RunStatus::default(), "{text}");
            assert!(r.use_after_close.is_empty(), "{text}");
        }
    }

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate(7), generate(7));
        assert_ne!(generate(7), generate(8));
    }
}
