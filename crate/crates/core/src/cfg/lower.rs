//! AST to CFG lowering.
//!
//! Finally blocks are duplicated per way of leaving the protected region: one
//! copy shared by the normal exits of the try body and catch block, one lazily
//! built copy for exceptional exits (which rethrows outward when it
//! completes), and one copy per `return` that crosses the try.

use std::collections::{BTreeMap, HashMap};

use super::{Cfg, EdgeKind, Instr, Literal, Node, NodeId, Recv, Var};
use crate::frontend::*;

struct Frame<'a> {
    catch_head: Option<NodeId>,
    finally: Option<&'a Block>,
    /// True while lowering the try body; false inside the catch block.
    in_protected: bool,
    exc_finally: Option<NodeId>,
    /// Scope at the try statement; finally copies resolve names against it.
    scopes: Scopes,
}

struct Builder<'a> {
    cx: TypeCtx<'a>,
    scopes: Scopes,
    nodes: Vec<Node>,
    edges: Vec<(NodeId, NodeId, EdgeKind)>,
    cur: Option<NodeId>,
    frames: Vec<Frame<'a>>,
    exit: NodeId,
    exc_exit: NodeId,
    temps: usize,
    var_types: BTreeMap<Var, String>,
    line: u32,
    alloc_ordinals: HashMap<SiteId, usize>,
    call_ordinals: HashMap<CallId, usize>,
    store_ordinals: HashMap<*const Stmt, usize>,
    field_writes: HashMap<String, usize>,
}

/// Lowers one method or constructor of `class`. Constructors run the
/// instance field initializers before their body.
pub fn lower(program: &Program, libspec: &LibrarySpec, class: &ClassDecl, method: &MethodDecl) -> Cfg {
    let key = if method.is_constructor() { MethodKey::ctor(&class.name, method.params.len()) } else { MethodKey::method(&class.name, &method.name) };
    let mut b = Builder::new(program, libspec, class, method.pos.line);
    let mut prelude: Vec<&Expr> = Vec::new();
    if method.is_constructor() {
        prelude.extend(class.fields.iter().filter(|f| !f.modifiers.is_static).filter_map(|f| f.initializer.as_ref()));
    }
    let prelude_names = if method.is_constructor() {
        class.fields.iter().filter(|f| !f.modifiers.is_static && f.initializer.is_some()).map(|f| f.name.clone()).collect()
    } else {
        Vec::new()
    };
    b.number(prelude.iter().copied(), prelude_names, Some(&method.body));

    b.scopes = Scopes::for_method(method);
    let mut params = Vec::new();
    if !method.is_static {
        b.var_types.insert(Var::this(), class.name.clone());
    }
    for p in &method.params {
        params.push(Var::new(&p.name));
        b.var_types.insert(Var::new(&p.name), p.ty.clone());
    }
    if method.is_constructor() {
        for f in class.fields.iter().filter(|f| !f.modifiers.is_static) {
            if let Some(init) = &f.initializer {
                b.line = f.pos.line;
                let v = b.expr(init);
                let write = b.next_write(&f.name);
                b.emit(Instr::StoreField { recv: Recv::Var(Var::this()), class: class.name.clone(), field: f.name.clone(), src: v, write }, false);
            }
        }
    }
    b.block(&method.body);
    b.finish(key, method.is_static, params)
}

/// Lowers the static field initializers of `class` as a pseudo-method
/// `<clinit>`; `None` if there are none.
pub fn lower_static_init(program: &Program, libspec: &LibrarySpec, class: &ClassDecl) -> Option<Cfg> {
    let inits: Vec<&FieldDecl> = class.fields.iter().filter(|f| f.modifiers.is_static && f.initializer.is_some()).collect();
    if inits.is_empty() {
        return None;
    }
    let mut b = Builder::new(program, libspec, class, class.pos.line);
    b.number(inits.iter().filter_map(|f| f.initializer.as_ref()), Vec::new(), None);
    for f in inits {
        b.line = f.pos.line;
        let v = b.expr(f.initializer.as_ref().unwrap());
        let write = b.next_write(&f.name);
        b.emit(Instr::StoreField { recv: Recv::Static(class.name.clone()), class: class.name.clone(), field: f.name.clone(), src: v, write }, false);
    }
    Some(b.finish(MethodKey::method(&class.name, "<clinit>"), true, Vec::new()))
}

/// The no-argument constructor of a class that declares none, when it has
/// instance field initializers to run.
fn implicit_constructor(c: &ClassDecl) -> Option<MethodDecl> {
    let runs_code = c.fields.iter().any(|f| !f.modifiers.is_static && f.initializer.is_some());
    (c.constructors.is_empty() && runs_code).then(|| MethodDecl {
        name: CTOR_NAME.to_string(),
        visibility: Visibility::Public,
        is_static: false,
        params: Vec::new(),
        return_type: None,
        body: Block::default(),
        annotations: Vec::new(),
        pos: c.pos,
    })
}

/// Every method, constructor and static initializer, in canonical order.
pub fn lower_program(program: &Program, libspec: &LibrarySpec) -> Vec<Cfg> {
    let mut out = Vec::new();
    for c in &program.classes {
        out.extend(lower_static_init(program, libspec, c));
        if let Some(m) = implicit_constructor(c) {
            out.push(lower(program, libspec, c, &m));
        }
        for m in c.constructors.iter().chain(&c.methods) {
            out.push(lower(program, libspec, c, m));
        }
    }
    out
}

impl<'a> Builder<'a> {
    fn new(program: &'a Program, libspec: &'a LibrarySpec, class: &'a ClassDecl, line: u32) -> Self {
        let mut b = Builder {
            cx: TypeCtx::new(program, libspec, class),
            scopes: Scopes::default(),
            nodes: Vec::new(),
            edges: Vec::new(),
            cur: None,
            frames: Vec::new(),
            exit: 0,
            exc_exit: 0,
            temps: 0,
            var_types: BTreeMap::new(),
            line,
            alloc_ordinals: HashMap::new(),
            call_ordinals: HashMap::new(),
            store_ordinals: HashMap::new(),
            field_writes: HashMap::new(),
        };
        let entry = b.node(Instr::Nop);
        b.exit = b.node(Instr::Nop);
        b.exc_exit = b.node(Instr::Nop);
        b.edge(b.exc_exit, b.exit, EdgeKind::Exceptional);
        b.cur = Some(entry);
        b
    }

    /// Per-method ordinals: allocations count per class, calls per method name.
    fn number<'e>(&mut self, prelude: impl Iterator<Item = &'e Expr>, prelude_names: Vec<String>, body: Option<&Block>) {
        let mut news: HashMap<String, usize> = HashMap::new();
        let mut calls: HashMap<String, usize> = HashMap::new();
        let mut visit = |e: &Expr| match &e.kind {
            ExprKind::New { class, site, .. } => {
                let n = news.entry(class.clone()).or_default();
                self.alloc_ordinals.insert(*site, *n);
                *n += 1;
            }
            ExprKind::Call { method, call, .. } => {
                let n = calls.entry(method.clone()).or_default();
                self.call_ordinals.insert(*call, *n);
                *n += 1;
            }
            _ => {}
        };
        for e in prelude {
            walk::expr(e, &mut visit);
        }
        if let Some(b) = body {
            walk::block_exprs(b, &mut visit);
        }
        let Some(body) = body else { return };
        let mut writes = self.field_writes.clone();
        for e in &prelude_names {
            *writes.entry(e.clone()).or_default() += 1;
        }
        walk::block_stmts(body, &mut |s| {
            if let StmtKind::Assign { target, .. } = &s.kind {
                let name = match &target.kind {
                    ExprKind::Name(n) | ExprKind::Field { name: n, .. } => n.clone(),
                    _ => return,
                };
                let n = writes.entry(name).or_default();
                self.store_ordinals.insert(s as *const Stmt, *n);
                *n += 1;
            }
        });
    }

    fn next_write(&mut self, field: &str) -> usize {
        let n = self.field_writes.entry(field.to_string()).or_default();
        *n += 1;
        *n - 1
    }

    fn node(&mut self, instr: Instr) -> NodeId {
        self.nodes.push(Node { instr, line: self.line });
        self.nodes.len() - 1
    }

    fn edge(&mut self, a: NodeId, b: NodeId, k: EdgeKind) {
        self.edges.push((a, b, k));
    }

    fn emit(&mut self, instr: Instr, throws: bool) -> NodeId {
        let id = self.node(instr);
        if let Some(c) = self.cur {
            self.edge(c, id, EdgeKind::Normal);
        }
        self.cur = Some(id);
        if throws {
            let t = self.exc_target();
            self.edge(id, t, EdgeKind::Exceptional);
        }
        id
    }

    fn temp(&mut self, ty: &str) -> Var {
        let v = Var(format!("$t{}", self.temps));
        self.temps += 1;
        self.var_types.insert(v.clone(), ty.to_string());
        v
    }

    /// Where an exception raised at the current point goes.
    fn exc_target(&mut self) -> NodeId {
        for i in (0..self.frames.len()).rev() {
            let f = &self.frames[i];
            if f.in_protected {
                if let Some(h) = f.catch_head {
                    return h;
                }
            }
            let Some(block) = f.finally else { continue };
            if let Some(e) = f.exc_finally {
                return e;
            }
            let saved_frames = self.frames.split_off(i);
            let saved_cur = self.cur;
            let saved_scopes = std::mem::replace(&mut self.scopes, saved_frames[0].scopes.clone());
            let entry = self.node(Instr::Nop);
            self.cur = Some(entry);
            self.scoped_block(block);
            if let Some(end) = self.cur {
                let t = self.exc_target();
                self.edge(end, t, EdgeKind::Exceptional);
            }
            self.frames.extend(saved_frames);
            self.frames[i].exc_finally = Some(entry);
            self.scopes = saved_scopes;
            self.cur = saved_cur;
            return entry;
        }
        self.exc_exit
    }

    fn finish(mut self, key: MethodKey, is_static: bool, params: Vec<Var>) -> Cfg {
        if self.cur.is_some() {
            self.emit(Instr::Return { src: None }, false);
            let (c, exit) = (self.cur.unwrap(), self.exit);
            self.edge(c, exit, EdgeKind::Normal);
        }
        // Keep only nodes reachable from the entry, plus the exit.
        let n = self.nodes.len();
        let mut succ: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for &(a, b, _) in &self.edges {
            succ[a].push(b);
        }
        let mut keep = vec![false; n];
        let mut stack = vec![0usize];
        keep[0] = true;
        while let Some(x) = stack.pop() {
            for &y in &succ[x] {
                if !keep[y] {
                    keep[y] = true;
                    stack.push(y);
                }
            }
        }
        keep[self.exit] = true;
        let mut remap = vec![usize::MAX; n];
        let mut nodes = Vec::new();
        for (i, node) in self.nodes.into_iter().enumerate() {
            if keep[i] {
                remap[i] = nodes.len();
                nodes.push(node);
            }
        }
        let edges = self.edges.iter().filter(|(a, b, _)| keep[*a] && keep[*b]).map(|&(a, b, k)| (remap[a], remap[b], k)).collect();
        let exc_exit = keep[self.exc_exit].then(|| remap[self.exc_exit]);
        Cfg::from_parts(key, is_static, params, nodes, edges, 0, remap[self.exit], exc_exit, self.var_types)
    }

    fn scoped_block(&mut self, b: &'a Block) {
        self.scopes.push();
        self.block(b);
        self.scopes.pop();
    }

    fn block(&mut self, b: &'a Block) {
        for s in &b.stmts {
            self.stmt(s);
        }
    }

    fn stmt(&mut self, s: &'a Stmt) {
        self.line = s.pos.line;
        match &s.kind {
            StmtKind::LocalDecl { ty, name, init } => {
                self.scopes.declare(name, ty);
                self.var_types.insert(Var::new(name), ty.clone());
                if let Some(e) = init {
                    self.expr_into(e, Var::new(name));
                }
            }
            StmtKind::Assign { target, value } => self.assign(s, target, value),
            StmtKind::Expr(e) => match &e.kind {
                ExprKind::Call { recv, method, args, call } => {
                    self.call(recv.as_deref(), method, args, *call, None, e.pos.line);
                }
                _ => {
                    self.expr(e);
                }
            },
            StmtKind::If { cond, then_block, else_block } => {
                let test = self.cond(cond);
                let branch = self.cur;
                self.arm(test.as_ref(), true);
                self.scoped_block(then_block);
                let then_end = self.cur;
                self.cur = branch;
                self.arm(test.as_ref(), false);
                if let Some(b) = else_block {
                    self.scoped_block(b);
                }
                self.join(&[then_end, self.cur]);
            }
            StmtKind::While { cond, body } => {
                let head = self.node(Instr::Nop);
                if let Some(c) = self.cur {
                    self.edge(c, head, EdgeKind::Normal);
                }
                self.cur = Some(head);
                let test = self.cond(cond);
                let branch = self.cur;
                self.arm(test.as_ref(), true);
                self.scoped_block(body);
                if let Some(c) = self.cur {
                    self.edge(c, head, EdgeKind::Normal);
                }
                self.cur = branch;
                self.arm(test.as_ref(), false);
            }
            StmtKind::Try { body, catch, finally } => self.try_stmt(body, catch.as_ref(), finally.as_ref()),
            StmtKind::Return(value) => self.ret(value.as_ref()),
        }
    }

    fn join(&mut self, ends: &[Option<NodeId>]) {
        let live: Vec<NodeId> = ends.iter().flatten().copied().collect();
        if live.is_empty() {
            self.cur = None;
            return;
        }
        let j = self.node(Instr::Nop);
        for e in live {
            self.edge(e, j, EdgeKind::Normal);
        }
        self.cur = Some(j);
    }

    /// Emits the `Assume` heading a branch arm, if the condition is a null test.
    fn arm(&mut self, test: Option<&(Var, bool)>, then_arm: bool) {
        if let Some((v, then_is_null)) = test {
            let is_null = if then_arm { *then_is_null } else { !*then_is_null };
            self.emit(Instr::Assume { var: v.clone(), is_null }, false);
        }
    }

    /// Lowers a branch condition. For `e == null` / `e != null` returns the
    /// tested local and whether the then-arm is the null case.
    fn cond(&mut self, cond: &'a Expr) -> Option<(Var, bool)> {
        if let ExprKind::Binary { op, lhs, rhs } = &cond.kind {
            let other = match (&lhs.kind, &rhs.kind) {
                (_, ExprKind::Null) => Some(lhs),
                (ExprKind::Null, _) => Some(rhs),
                _ => None,
            };
            if let Some(o) = other {
                let v = self.expr(o);
                return Some((v, *op == BinOp::Eq));
            }
        }
        self.expr(cond);
        None
    }

    fn try_stmt(&mut self, body: &'a Block, catch: Option<&'a CatchClause>, finally: Option<&'a Block>) {
        let catch_head = catch.map(|c| {
            let h = self.node(Instr::Catch { dst: Var::new(&c.name) });
            self.var_types.insert(Var::new(&c.name), c.ty.clone());
            h
        });
        self.frames.push(Frame { catch_head, finally, in_protected: true, exc_finally: None, scopes: self.scopes.clone() });
        self.scoped_block(body);
        let body_end = self.cur;
        let mut catch_end = None;
        if let (Some(c), Some(h)) = (catch, catch_head) {
            self.frames.last_mut().unwrap().in_protected = false;
            self.cur = Some(h);
            self.line = self.nodes[h].line;
            self.scopes.push();
            self.scopes.declare(&c.name, &c.ty);
            self.block(&c.body);
            self.scopes.pop();
            catch_end = self.cur;
        }
        self.frames.pop();
        self.join(&[body_end, catch_end]);
        if let Some(f) = finally {
            self.scoped_block(f);
        }
    }

    fn ret(&mut self, value: Option<&'a Expr>) {
        let crosses_finally = self.frames.iter().any(|f| f.finally.is_some());
        let src = value.map(|e| {
            let v = self.expr(e);
            if crosses_finally {
                let ty = self.var_types.get(&v).cloned().unwrap_or_else(|| "Object".to_string());
                let t = self.temp(&ty);
                self.emit(Instr::Copy { dst: t.clone(), src: v }, false);
                t
            } else {
                v
            }
        });
        for i in (0..self.frames.len()).rev() {
            let Some(block) = self.frames[i].finally else { continue };
            let saved = self.frames.split_off(i);
            let saved_scopes = std::mem::replace(&mut self.scopes, saved[0].scopes.clone());
            self.scoped_block(block);
            self.scopes = saved_scopes;
            self.frames.extend(saved);
        }
        self.emit(Instr::Return { src }, false);
        if let Some(c) = self.cur {
            let exit = self.exit;
            self.edge(c, exit, EdgeKind::Normal);
        }
        self.cur = None;
    }

    fn this_recv(&self) -> Recv {
        Recv::Var(Var::this())
    }

    fn assign(&mut self, stmt: &'a Stmt, target: &'a Expr, value: &'a Expr) {
        let write = self.store_ordinals.get(&(stmt as *const Stmt)).copied().unwrap_or(0);
        match &target.kind {
            ExprKind::Name(n) => match self.cx.resolve(&self.scopes, n) {
                Resolved::Field { class, is_static, .. } => {
                    let recv = if is_static { Recv::Static(class.clone()) } else { self.this_recv() };
                    let v = self.expr(value);
                    self.emit(Instr::StoreField { recv, class, field: n.clone(), src: v, write }, false);
                }
                _ => self.expr_into(value, Var::new(n)),
            },
            ExprKind::Field { recv, name } => {
                let r = self.recv(recv);
                let class = self.recv_class(recv, &r);
                let v = self.expr(value);
                let throws = matches!(&r, Recv::Var(x) if !x.is_this());
                self.emit(Instr::StoreField { recv: r, class, field: name.clone(), src: v, write }, throws);
            }
            _ => {
                self.expr(value);
            }
        }
    }

    fn recv(&mut self, e: &'a Expr) -> Recv {
        if let ExprKind::Name(n) = &e.kind {
            if let Resolved::Class(c) = self.cx.resolve(&self.scopes, n) {
                return Recv::Static(c);
            }
        }
        Recv::Var(self.expr(e))
    }

    fn recv_class(&self, e: &Expr, r: &Recv) -> String {
        match r {
            Recv::Static(c) => c.clone(),
            Recv::Var(_) => self.cx.type_of(&self.scopes, e).unwrap_or_default(),
        }
    }

    /// Lowers `e` so that its value lands in `dst`.
    fn expr_into(&mut self, e: &'a Expr, dst: Var) {
        match &e.kind {
            ExprKind::New { .. } => {
                self.alloc(e, dst);
            }
            ExprKind::Call { recv, method, args, call } => {
                self.call(recv.as_deref(), method, args, *call, Some(dst), e.pos.line);
            }
            ExprKind::Null => {
                self.emit(Instr::Const { dst, value: Literal::Null }, false);
            }
            ExprKind::Int(n) => {
                self.emit(Instr::Const { dst, value: Literal::Int(*n) }, false);
            }
            ExprKind::Str(s) => {
                self.emit(Instr::Const { dst, value: Literal::Str(s.clone()) }, false);
            }
            _ => {
                let v = self.expr(e);
                if v != dst {
                    self.emit(Instr::Copy { dst, src: v }, false);
                }
            }
        }
    }

    fn alloc(&mut self, e: &'a Expr, dst: Var) {
        let ExprKind::New { class, args, site } = &e.kind else { unreachable!() };
        let args: Vec<Var> = args.iter().map(|a| self.expr(a)).collect();
        let saved = self.line;
        self.line = e.pos.line;
        let ordinal = self.alloc_ordinals.get(site).copied().unwrap_or(0);
        self.emit(Instr::Alloc { site: *site, class: class.clone(), args, dst, ordinal }, true);
        self.line = saved;
    }

    fn call(&mut self, recv: Option<&'a Expr>, method: &str, args: &'a [Expr], call: CallId, dst: Option<Var>, line: u32) {
        let (r, class) = match recv {
            None => {
                let cls = self.cx.class;
                let is_static = cls.method(method).map(|m| m.is_static).unwrap_or(false);
                let r = if is_static { Recv::Static(cls.name.clone()) } else { self.this_recv() };
                (r, cls.name.clone())
            }
            Some(e) => {
                let r = self.recv(e);
                let c = self.recv_class(e, &r);
                (r, c)
            }
        };
        let args: Vec<Var> = args.iter().map(|a| self.expr(a)).collect();
        let saved = self.line;
        self.line = line;
        let ordinal = self.call_ordinals.get(&call).copied().unwrap_or(0);
        self.emit(Instr::Invoke { recv: r, class, method: method.to_string(), args, dst, call, ordinal }, true);
        self.line = saved;
    }

    /// Lowers `e` to a local holding its value.
    fn expr(&mut self, e: &'a Expr) -> Var {
        match &e.kind {
            ExprKind::Name(n) => match self.cx.resolve(&self.scopes, n) {
                Resolved::Local { .. } => Var::new(n),
                Resolved::Field { class, ty, is_static } => {
                    let t = self.temp(&ty);
                    let recv = if is_static { Recv::Static(class.clone()) } else { self.this_recv() };
                    self.emit(Instr::LoadField { dst: t.clone(), recv, class, field: n.clone() }, false);
                    t
                }
                Resolved::Class(_) | Resolved::Unknown => {
                    let t = self.temp("Object");
                    self.emit(Instr::Const { dst: t.clone(), value: Literal::Null }, false);
                    t
                }
            },
            ExprKind::This => Var::this(),
            ExprKind::Field { recv, name } => {
                let r = self.recv(recv);
                let class = self.recv_class(recv, &r);
                let ty = self.cx.program.class(&class).and_then(|c| c.field(name)).map(|f| f.ty.clone()).unwrap_or_else(|| "Object".to_string());
                let t = self.temp(&ty);
                let throws = matches!(&r, Recv::Var(x) if !x.is_this());
                self.emit(Instr::LoadField { dst: t.clone(), recv: r, class, field: name.clone() }, throws);
                t
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let l = self.expr(lhs);
                let r = self.expr(rhs);
                let t = self.temp("boolean");
                self.emit(Instr::Compare { dst: t.clone(), op: *op, lhs: l, rhs: r }, false);
                t
            }
            _ => {
                let ty = self.cx.type_of(&self.scopes, e).unwrap_or_else(|| "Object".to_string());
                let t = self.temp(&ty);
                self.expr_into(e, t.clone());
                t
            }
        }
    }
}
