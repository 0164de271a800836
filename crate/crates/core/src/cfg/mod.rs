//! Three-address control-flow graphs with exceptional edges.

pub mod alias;
pub mod dataflow;
mod lower;

use std::collections::BTreeMap;
use std::fmt;

use crate::frontend::{BinOp, CallId, MethodKey, SiteId};

pub use alias::{must_alias, AliasGroup, AliasSets};
pub use dataflow::{solve, Analysis, Solution};
pub use lower::{lower, lower_program, lower_static_init};

pub type NodeId = usize;

/// A method-scoped local. `this` and compiler temporaries (`$tN`) are locals too.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub String);

impl Var {
    pub fn new(s: &str) -> Self {
        Var(s.to_string())
    }

    pub fn this() -> Self {
        Var("this".to_string())
    }

    pub fn is_this(&self) -> bool {
        self.0 == "this"
    }

    pub fn is_temp(&self) -> bool {
        self.0.starts_with('$')
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Receiver of a field access or call.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Recv {
    Var(Var),
    Static(String),
}

impl Recv {
    pub fn var(&self) -> Option<&Var> {
        match self {
            Recv::Var(v) => Some(v),
            Recv::Static(_) => None,
        }
    }

    pub fn is_this(&self) -> bool {
        matches!(self, Recv::Var(v) if v.is_this())
    }
}

impl fmt::Display for Recv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recv::Var(v) => write!(f, "{v}"),
            Recv::Static(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    Null,
    Int(i64),
    Str(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Instr {
    Nop,
    /// `ordinal` counts earlier allocations of the same class in the same method.
    Alloc {
        site: SiteId,
        class: String,
        args: Vec<Var>,
        dst: Var,
        ordinal: usize,
    },
    Copy {
        dst: Var,
        src: Var,
    },
    LoadField {
        dst: Var,
        recv: Recv,
        class: String,
        field: String,
    },
    /// `write` counts earlier assignments to a field of the same name in the method.
    StoreField {
        recv: Recv,
        class: String,
        field: String,
        src: Var,
        write: usize,
    },
    /// `class` is the static type of the receiver; empty when unresolved.
    Invoke {
        recv: Recv,
        class: String,
        method: String,
        args: Vec<Var>,
        dst: Option<Var>,
        call: CallId,
        ordinal: usize,
    },
    Return {
        src: Option<Var>,
    },
    Const {
        dst: Var,
        value: Literal,
    },
    Compare {
        dst: Var,
        op: BinOp,
        lhs: Var,
        rhs: Var,
    },
    /// Placed at the head of a branch arm of `var == null` / `var != null`.
    Assume {
        var: Var,
        is_null: bool,
    },
    /// Head of a catch block; binds the caught exception.
    Catch {
        dst: Var,
    },
}

impl Instr {
    /// The local this instruction defines, if any.
    pub fn def(&self) -> Option<&Var> {
        match self {
            Instr::Alloc { dst, .. }
            | Instr::Copy { dst, .. }
            | Instr::LoadField { dst, .. }
            | Instr::Const { dst, .. }
            | Instr::Compare { dst, .. }
            | Instr::Catch { dst } => Some(dst),
            Instr::Invoke { dst, .. } => dst.as_ref(),
            _ => None,
        }
    }

    /// Locals read by this instruction.
    pub fn uses(&self) -> Vec<&Var> {
        match self {
            Instr::Alloc { args, .. } => args.iter().collect(),
            Instr::Copy { src, .. } => vec![src],
            Instr::LoadField { recv, .. } => recv.var().into_iter().collect(),
            Instr::StoreField { recv, src, .. } => recv.var().into_iter().chain(Some(src)).collect(),
            Instr::Invoke { recv, args, .. } => recv.var().into_iter().chain(args.iter()).collect(),
            Instr::Return { src } => src.iter().collect(),
            Instr::Compare { lhs, rhs, .. } => vec![lhs, rhs],
            Instr::Assume { var, .. } => vec![var],
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |vs: &[Var]| vs.iter().map(|v| v.0.as_str()).collect::<Vec<_>>().join(", ");
        match self {
            Instr::Nop => write!(f, "nop"),
            Instr::Alloc { site, class, args, dst, .. } => {
                write!(f, "{dst} = new {class}({}) @{site}", list(args))
            }
            Instr::Copy { dst, src } => write!(f, "{dst} = {src}"),
            Instr::LoadField { dst, recv, field, .. } => write!(f, "{dst} = {recv}.{field}"),
            Instr::StoreField { recv, field, src, .. } => write!(f, "{recv}.{field} = {src}"),
            Instr::Invoke { recv, method, args, dst, .. } => {
                if let Some(d) = dst {
                    write!(f, "{d} = ")?;
                }
                write!(f, "{recv}.{method}({})", list(args))
            }
            Instr::Return { src: Some(v) } => write!(f, "return {v}"),
            Instr::Return { src: None } => write!(f, "return"),
            Instr::Const { dst, value } => match value {
                Literal::Null => write!(f, "{dst} = null"),
                Literal::Int(n) => write!(f, "{dst} = {n}"),
                Literal::Str(s) => write!(f, "{dst} = {s:?}"),
            },
            Instr::Compare { dst, op, lhs, rhs } => write!(f, "{dst} = {lhs} {} {rhs}", op.symbol()),
            Instr::Assume { var, is_null: true } => write!(f, "assume {var} == null"),
            Instr::Assume { var, is_null: false } => write!(f, "assume {var} != null"),
            Instr::Catch { dst } => write!(f, "catch {dst}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    Normal,
    Exceptional,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub instr: Instr,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    pub key: MethodKey,
    pub is_static: bool,
    pub params: Vec<Var>,
    pub nodes: Vec<Node>,
    /// Sorted and free of duplicates.
    pub edges: Vec<(NodeId, NodeId, EdgeKind)>,
    pub entry: NodeId,
    pub exit: NodeId,
    /// Collects uncaught exceptions; its only successor is `exit`, by an exceptional edge.
    pub exc_exit: Option<NodeId>,
    pub var_types: BTreeMap<Var, String>,
    succs: Vec<Vec<(NodeId, EdgeKind)>>,
    preds: Vec<Vec<(NodeId, EdgeKind)>>,
}

impl Cfg {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        key: MethodKey,
        is_static: bool,
        params: Vec<Var>,
        nodes: Vec<Node>,
        mut edges: Vec<(NodeId, NodeId, EdgeKind)>,
        entry: NodeId,
        exit: NodeId,
        exc_exit: Option<NodeId>,
        var_types: BTreeMap<Var, String>,
    ) -> Self {
        edges.sort();
        edges.dedup();
        let mut succs = vec![Vec::new(); nodes.len()];
        let mut preds = vec![Vec::new(); nodes.len()];
        for &(a, b, k) in &edges {
            succs[a].push((b, k));
            preds[b].push((a, k));
        }
        Cfg { key, is_static, params, nodes, edges, entry, exit, exc_exit, var_types, succs, preds }
    }

    pub fn succs(&self, n: NodeId) -> &[(NodeId, EdgeKind)] {
        &self.succs[n]
    }

    pub fn preds(&self, n: NodeId) -> &[(NodeId, EdgeKind)] {
        &self.preds[n]
    }

    pub fn instr(&self, n: NodeId) -> &Instr {
        &self.nodes[n].instr
    }

    pub fn type_of(&self, v: &Var) -> Option<&str> {
        self.var_types.get(v).map(String::as_str)
    }

    /// Node ids in reverse postorder from the entry.
    pub fn reverse_postorder(&self) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut post = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![(self.entry, 0usize)];
        seen[self.entry] = true;
        while let Some((n, i)) = stack.pop() {
            if let Some(&(s, _)) = self.succs[n].get(i) {
                stack.push((n, i + 1));
                if !seen[s] {
                    seen[s] = true;
                    stack.push((s, 0));
                }
            } else {
                post.push(n);
            }
        }
        post.reverse();
        post
    }

    /// Graphviz rendering for debugging.
    pub fn to_dot(&self) -> String {
        let mut out = format!("digraph \"{}\" {{\n  node [shape=box, fontname=monospace];\n", self.key);
        for (i, n) in self.nodes.iter().enumerate() {
            let mut label = n.instr.to_string();
            if i == self.entry {
                label = format!("entry: {label}");
            } else if i == self.exit {
                label = format!("exit: {label}");
            } else if Some(i) == self.exc_exit {
                label = format!("exc-exit: {label}");
            }
            let label = label.replace('\\', "\\\\").replace('"', "\\\"");
            out.push_str(&format!("  n{i} [label=\"{label} (L{})\"];\n", n.line));
        }
        for &(a, b, k) in &self.edges {
            let style = if k == EdgeKind::Exceptional { " [style=dashed]" } else { "" };
            out.push_str(&format!("  n{a} -> n{b}{style};\n"));
        }
        out.push_str("}\n");
        out
    }
}
