//! A big-step interpreter over the AST.
//!
//! Library objects are synthetic: constructing one opens it, a must-call
//! method closes it (idempotently, cascading to the objects it owns), and
//! any other method checks that it and everything it wraps are still open
//! and then emits an output event.

use std::collections::{BTreeSet, HashMap};

use super::*;
use crate::frontend::*;

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Null,
    Int(i64),
    Bool(bool),
    Str(String),
    Ref(usize),
}

/// A field `(object, name)` a value was read from.
type Taint = Option<(usize, String)>;

#[derive(Debug, Default)]
struct LibState {
    must_call: Vec<String>,
    open: bool,
    /// Objects closed along with this one.
    owned: Vec<usize>,
    /// Objects used, but not closed, by this one.
    retained: Vec<usize>,
    items: Vec<Value>,
}

#[derive(Debug)]
struct Obj {
    class: String,
    site: SiteId,
    fields: HashMap<String, Value>,
    lib: Option<LibState>,
    tags: BTreeSet<Attribution>,
}

enum Flow {
    Throw(RuntimeErrorKind),
    Return(Value, Taint),
    Abort,
}

type Exec<T> = Result<T, Flow>;

struct Frame {
    class: String,
    this: Option<usize>,
    scopes: Vec<HashMap<String, (Value, Taint)>>,
}

impl Frame {
    fn lookup(&self, name: &str) -> Option<&(Value, Taint)> {
        self.scopes.iter().rev().find_map(|s| s.get(name))
    }

    fn assign(&mut self, name: &str, v: (Value, Taint)) -> bool {
        for s in self.scopes.iter_mut().rev() {
            if let Some(slot) = s.get_mut(name) {
                *slot = v;
                return true;
            }
        }
        false
    }

    fn declare(&mut self, name: &str, v: (Value, Taint)) {
        self.scopes.last_mut().unwrap().insert(name.to_string(), v);
    }
}

pub(super) struct Interp<'a> {
    program: &'a Program,
    lib: &'a LibrarySpec,
    heap: Vec<Obj>,
    statics: HashMap<(String, String), Value>,
    steps: u64,
    limit: u64,
    report: RuntimeReport,
}

fn default_value(ty: &str) -> Value {
    match ty {
        "int" => Value::Int(0),
        "boolean" => Value::Bool(false),
        _ => Value::Null,
    }
}

fn truthy(v: &Value) -> bool {
    match v {
        Value::Null => false,
        Value::Bool(b) => *b,
        Value::Int(n) => *n != 0,
        Value::Str(_) | Value::Ref(_) => true,
    }
}

impl<'a> Interp<'a> {
    pub(super) fn new(program: &'a Program, lib: &'a LibrarySpec, limit: u64) -> Self {
        Interp { program, lib, heap: Vec::new(), statics: HashMap::new(), steps: 0, limit, report: RuntimeReport::default() }
    }

    pub(super) fn run_main(mut self, class: &ClassDecl, main: &MethodDecl) -> RuntimeReport {
        let outcome = self.init_statics().and_then(|_| {
            let args = main.params.iter().map(|_| (Value::Null, None)).collect();
            self.invoke(class, main, None, args).map(|_| ())
        });
        self.report.status = match outcome {
            Ok(()) | Err(Flow::Return(..)) => RunStatus::Completed,
            Err(Flow::Throw(k)) => RunStatus::RuntimeError(k),
            Err(Flow::Abort) => RunStatus::RuntimeError(RuntimeErrorKind::StepLimitExceeded),
        };
        self.report.steps = self.steps;
        for (id, o) in self.heap.iter().enumerate() {
            let Some(l) = &o.lib else { continue };
            if l.open && !l.must_call.is_empty() {
                self.report.leaks.push(LeakedResource { object: id, site: o.site, class: o.class.clone(), tags: o.tags.clone() });
            }
        }
        self.report.leaked_sites = self.report.leaks.iter().map(|l| l.site).collect();
        self.report.leaked_sites.sort();
        self.report
    }

    fn tick(&mut self) -> Exec<()> {
        self.steps += 1;
        if self.steps > self.limit {
            return Err(Flow::Abort);
        }
        Ok(())
    }

    fn init_statics(&mut self) -> Exec<()> {
        let program = self.program;
        for c in &program.classes {
            for f in c.fields.iter().filter(|f| f.modifiers.is_static) {
                self.statics.insert((c.name.clone(), f.name.clone()), default_value(&f.ty));
            }
        }
        for c in &program.classes {
            let mut frame = Frame { class: c.name.clone(), this: None, scopes: vec![HashMap::new()] };
            for f in c.fields.iter().filter(|f| f.modifiers.is_static) {
                if let Some(init) = &f.initializer {
                    let (v, _) = self.eval(&mut frame, init)?;
                    self.statics.insert((c.name.clone(), f.name.clone()), v);
                }
            }
        }
        Ok(())
    }

    /// Every object reachable from `v`, including itself.
    fn reach(&self, v: &Value) -> Vec<usize> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = match v {
            Value::Ref(o) => vec![*o],
            _ => Vec::new(),
        };
        while let Some(o) = stack.pop() {
            if !seen.insert(o) {
                continue;
            }
            let obj = &self.heap[o];
            for v in obj.fields.values() {
                if let Value::Ref(x) = v {
                    stack.push(*x);
                }
            }
            if let Some(l) = &obj.lib {
                stack.extend(l.owned.iter().chain(&l.retained));
                stack.extend(l.items.iter().filter_map(|v| match v {
                    Value::Ref(x) => Some(*x),
                    _ => None,
                }));
            }
        }
        seen.into_iter().collect()
    }

    fn tag(&mut self, v: &Value, tags: &BTreeSet<Attribution>) {
        for o in self.reach(v) {
            self.heap[o].tags.extend(tags.iter().cloned());
        }
    }

    /// Tags of a container, which everything stored into it inherits.
    fn holder_tags(&self, o: usize) -> BTreeSet<Attribution> {
        let mut t = self.heap[o].tags.clone();
        t.insert(Attribution::Site(self.heap[o].site));
        t
    }

    fn note_escape(&mut self, taint: &Taint, target: &str) {
        if let Some((o, f)) = taint {
            let class = self.heap[*o].class.clone();
            self.report.field_escapes.push(FieldEscape { class, field: f.clone(), target: target.to_string() });
        }
    }

    fn store_field(&mut self, o: usize, field: &str, v: (Value, Taint)) {
        let class = self.heap[o].class.clone();
        if let Some(old) = self.heap[o].fields.get(field).cloned() {
            if old != v.0 {
                self.tag(&old, &BTreeSet::from([Attribution::Overwrite(format!("{class}.{field}"))]));
            }
        }
        let tags = self.holder_tags(o);
        self.tag(&v.0, &tags);
        self.note_escape(&v.1, &class);
        self.heap[o].fields.insert(field.to_string(), v.0);
    }

    fn block(&mut self, frame: &mut Frame, b: &Block) -> Exec<()> {
        frame.scopes.push(HashMap::new());
        let r = b.stmts.iter().try_for_each(|s| self.stmt(frame, s));
        frame.scopes.pop();
        r
    }

    fn stmt(&mut self, frame: &mut Frame, s: &Stmt) -> Exec<()> {
        self.tick()?;
        match &s.kind {
            StmtKind::LocalDecl { ty, name, init } => {
                let v = match init {
                    Some(e) => self.eval(frame, e)?,
                    None => (default_value(ty), None),
                };
                frame.declare(name, v);
            }
            StmtKind::Assign { target, value } => {
                let v = self.eval(frame, value)?;
                match &target.kind {
                    ExprKind::Name(n) => {
                        if !frame.assign(n, v.clone()) {
                            self.assign_field_by_name(frame, n, v)?;
                        }
                    }
                    ExprKind::Field { recv, name } => {
                        let (r, _) = self.eval(frame, recv)?;
                        match r {
                            Value::Ref(o) => self.store_field(o, name, v),
                            Value::Null => return Err(Flow::Throw(RuntimeErrorKind::NullDereference)),
                            _ => return Err(Flow::Throw(RuntimeErrorKind::TypeError)),
                        }
                    }
                    _ => return Err(Flow::Throw(RuntimeErrorKind::TypeError)),
                }
            }
            StmtKind::Expr(e) => {
                self.eval(frame, e)?;
            }
            StmtKind::If { cond, then_block, else_block } => {
                let (c, _) = self.eval(frame, cond)?;
                if truthy(&c) {
                    self.block(frame, then_block)?;
                } else if let Some(b) = else_block {
                    self.block(frame, b)?;
                }
            }
            StmtKind::While { cond, body } => loop {
                self.tick()?;
                let (c, _) = self.eval(frame, cond)?;
                if !truthy(&c) {
                    break;
                }
                self.block(frame, body)?;
            },
            StmtKind::Try { body, catch, finally } => {
                let mut r = self.block(frame, body);
                if let (Err(Flow::Throw(k)), Some(c)) = (&r, catch) {
                    let caught = Value::Str(format!("{k:?}"));
                    frame.scopes.push(HashMap::from([(c.name.clone(), (caught, None))]));
                    r = self.block(frame, &c.body);
                    frame.scopes.pop();
                }
                if matches!(r, Err(Flow::Abort)) {
                    return r;
                }
                if let Some(f) = finally {
                    self.block(frame, f)?;
                }
                r?;
            }
            StmtKind::Return(e) => {
                let v = match e {
                    Some(e) => self.eval(frame, e)?,
                    None => (Value::Null, None),
                };
                return Err(Flow::Return(v.0, v.1));
            }
        }
        Ok(())
    }

    fn assign_field_by_name(&mut self, frame: &mut Frame, n: &str, v: (Value, Taint)) -> Exec<()> {
        let class = self.program.class(&frame.class).and_then(|c| c.field(n));
        match class {
            Some(f) if f.modifiers.is_static => {
                self.note_escape(&v.1, &frame.class);
                self.statics.insert((frame.class.clone(), n.to_string()), v.0);
                Ok(())
            }
            Some(_) => match frame.this {
                Some(o) => {
                    self.store_field(o, n, v);
                    Ok(())
                }
                None => Err(Flow::Throw(RuntimeErrorKind::NullDereference)),
            },
            None => Err(Flow::Throw(RuntimeErrorKind::TypeError)),
        }
    }

    fn read_name(&mut self, frame: &Frame, n: &str) -> Exec<(Value, Taint)> {
        if let Some(v) = frame.lookup(n) {
            return Ok(v.clone());
        }
        let Some(f) = self.program.class(&frame.class).and_then(|c| c.field(n)) else {
            return Err(Flow::Throw(RuntimeErrorKind::TypeError));
        };
        if f.modifiers.is_static {
            let v = self.statics.get(&(frame.class.clone(), n.to_string())).cloned().unwrap_or(Value::Null);
            return Ok((v, None));
        }
        let o = frame.this.ok_or(Flow::Throw(RuntimeErrorKind::NullDereference))?;
        Ok(self.read_field(o, n))
    }

    fn read_field(&self, o: usize, name: &str) -> (Value, Taint) {
        let v = self.heap[o].fields.get(name).cloned().unwrap_or(Value::Null);
        let taint = matches!(v, Value::Ref(_)).then(|| (o, name.to_string()));
        (v, taint)
    }

    /// A bare name that denotes a class rather than a value.
    fn static_class(&self, frame: &Frame, e: &Expr) -> Option<String> {
        let ExprKind::Name(n) = &e.kind else { return None };
        if frame.lookup(n).is_some() || self.program.class(&frame.class).and_then(|c| c.field(n)).is_some() {
            return None;
        }
        (self.program.class(n).is_some() || self.lib.is_library_class(n)).then(|| n.clone())
    }

    fn eval(&mut self, frame: &mut Frame, e: &Expr) -> Exec<(Value, Taint)> {
        match &e.kind {
            ExprKind::Null => Ok((Value::Null, None)),
            ExprKind::Int(n) => Ok((Value::Int(*n), None)),
            ExprKind::Str(s) => Ok((Value::Str(s.clone()), None)),
            ExprKind::This => Ok((frame.this.map(Value::Ref).unwrap_or(Value::Null), None)),
            ExprKind::Name(n) => self.read_name(frame, n),
            ExprKind::Field { recv, name } => {
                if let Some(c) = self.static_class(frame, recv) {
                    let v = self.statics.get(&(c, name.clone())).cloned().unwrap_or(Value::Null);
                    return Ok((v, None));
                }
                match self.eval(frame, recv)?.0 {
                    Value::Ref(o) => Ok(self.read_field(o, name)),
                    Value::Null => Err(Flow::Throw(RuntimeErrorKind::NullDereference)),
                    _ => Err(Flow::Throw(RuntimeErrorKind::TypeError)),
                }
            }
            ExprKind::Binary { op, lhs, rhs } => {
                let (l, _) = self.eval(frame, lhs)?;
                let (r, _) = self.eval(frame, rhs)?;
                let eq = l == r;
                Ok((Value::Bool(if *op == BinOp::Eq { eq } else { !eq }), None))
            }
            ExprKind::New { class, args, site } => {
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(frame, a)?);
                }
                self.tick()?;
                self.instantiate(class, *site, vals).map(|v| (v, None))
            }
            ExprKind::Call { recv, method, args, call } => {
                let target = match recv {
                    None => None,
                    Some(r) => match self.static_class(frame, r) {
                        Some(c) => Some(Err(c)),
                        None => Some(Ok(self.eval(frame, r)?.0)),
                    },
                };
                let mut vals = Vec::with_capacity(args.len());
                for a in args {
                    vals.push(self.eval(frame, a)?);
                }
                self.tick()?;
                self.call(frame, target, method, vals, *call)
            }
        }
    }

    fn instantiate(&mut self, class: &str, site: SiteId, args: Vec<(Value, Taint)>) -> Exec<Value> {
        let id = self.heap.len();
        if let Some(decl) = self.program.class(class) {
            let mut fields = HashMap::new();
            for f in decl.fields.iter().filter(|f| !f.modifiers.is_static) {
                fields.insert(f.name.clone(), default_value(&f.ty));
            }
            self.heap.push(Obj { class: class.to_string(), site, fields, lib: None, tags: BTreeSet::new() });
            let ctor = decl.constructor(args.len());
            if ctor.is_none() && !(decl.constructors.is_empty() && args.is_empty()) {
                return Err(Flow::Throw(RuntimeErrorKind::NoSuchMethod));
            }
            let mut frame = Frame { class: class.to_string(), this: Some(id), scopes: vec![HashMap::new()] };
            for f in decl.fields.iter().filter(|f| !f.modifiers.is_static) {
                if let Some(init) = &f.initializer {
                    let v = self.eval(&mut frame, init)?;
                    self.store_field(id, &f.name, v);
                }
            }
            if let Some(ctor) = ctor {
                let key = MethodKey::ctor(class, args.len());
                self.bind_and_run(&key, ctor, frame, args)?;
            }
            return Ok(Value::Ref(id));
        }
        let lc = self.lib.class(class);
        let spec = lc.and_then(|c| c.constructors.get(&args.len()));
        let must_call = lc.map(|c| c.must_call.clone()).unwrap_or_default();
        self.heap.push(Obj {
            class: class.to_string(),
            site,
            fields: HashMap::new(),
            lib: Some(LibState { must_call, open: true, ..Default::default() }),
            tags: BTreeSet::new(),
        });
        for (i, (v, taint)) in args.iter().enumerate() {
            let Value::Ref(x) = v else { continue };
            let mode = spec.map(|s| s.param(i)).unwrap_or(ParamMode::NotOwning);
            match mode {
                ParamMode::Owning => self.heap[id].lib.as_mut().unwrap().owned.push(*x),
                ParamMode::Retaining => self.heap[id].lib.as_mut().unwrap().retained.push(*x),
                ParamMode::NotOwning => continue,
            }
            let tags = self.holder_tags(id);
            self.tag(v, &tags);
            self.note_escape(taint, class);
        }
        Ok(Value::Ref(id))
    }

    /// `target` is `None` for an unqualified call, `Err(class)` for a static one.
    fn call(
        &mut self,
        frame: &mut Frame,
        target: Option<Result<Value, String>>,
        method: &str,
        args: Vec<(Value, Taint)>,
        call: CallId,
    ) -> Exec<(Value, Taint)> {
        let (class, this) = match target {
            None => {
                let decl = self.program.class(&frame.class);
                let is_static = decl.and_then(|c| c.method(method)).is_some_and(|m| m.is_static);
                (frame.class.clone(), if is_static { None } else { frame.this })
            }
            Some(Err(c)) => (c, None),
            Some(Ok(Value::Ref(o))) => {
                if self.heap[o].lib.is_some() {
                    return self.lib_call(o, method, args);
                }
                (self.heap[o].class.clone(), Some(o))
            }
            Some(Ok(Value::Null)) => return Err(Flow::Throw(RuntimeErrorKind::NullDereference)),
            Some(Ok(_)) => return Ok((Value::Null, None)),
        };
        let program = self.program;
        let Some(decl) = program.class(&class) else { return Err(Flow::Throw(RuntimeErrorKind::NoSuchMethod)) };
        let Some(m) = decl.method(method) else { return Err(Flow::Throw(RuntimeErrorKind::NoSuchMethod)) };
        if m.params.len() != args.len() || (!m.is_static && this.is_none()) {
            return Err(Flow::Throw(RuntimeErrorKind::NoSuchMethod));
        }
        let (v, taint) = self.invoke(decl, m, this, args)?;
        self.tag(&v, &BTreeSet::from([Attribution::Call(call)]));
        Ok((v, taint))
    }

    fn invoke(&mut self, class: &ClassDecl, m: &MethodDecl, this: Option<usize>, args: Vec<(Value, Taint)>) -> Exec<(Value, Taint)> {
        let frame = Frame { class: class.name.clone(), this, scopes: vec![HashMap::new()] };
        self.bind_and_run(&MethodKey::method(&class.name, &m.name), m, frame, args)
    }

    fn bind_and_run(&mut self, key: &MethodKey, m: &MethodDecl, mut frame: Frame, args: Vec<(Value, Taint)>) -> Exec<(Value, Taint)> {
        for (i, (p, a)) in m.params.iter().zip(args).enumerate() {
            self.tag(&a.0, &BTreeSet::from([Attribution::Param(key.clone(), i)]));
            frame.declare(&p.name, a);
        }
        match self.block(&mut frame, &m.body) {
            Ok(()) => Ok((Value::Null, None)),
            Err(Flow::Return(v, t)) => Ok((v, t)),
            Err(e) => Err(e),
        }
    }

    fn close(&mut self, o: usize) {
        let Some(l) = self.heap[o].lib.as_mut() else { return };
        if !l.open {
            return;
        }
        l.open = false;
        let owned = l.owned.clone();
        for x in owned {
            self.close(x);
        }
    }

    /// The first closed resource among `o` and what it wraps.
    fn closed_in_chain(&self, o: usize, seen: &mut BTreeSet<usize>) -> Option<usize> {
        if !seen.insert(o) {
            return None;
        }
        let obj = &self.heap[o];
        let l = obj.lib.as_ref()?;
        if !l.open && !l.must_call.is_empty() {
            return Some(o);
        }
        l.owned.iter().chain(&l.retained).find_map(|&x| self.closed_in_chain(x, seen))
    }

    fn render(&self, v: &Value) -> String {
        match v {
            Value::Null => "null".to_string(),
            Value::Int(n) => n.to_string(),
            Value::Bool(b) => b.to_string(),
            Value::Str(s) => s.clone(),
            Value::Ref(o) => self.heap[*o].class.clone(),
        }
    }

    fn lib_call(&mut self, o: usize, method: &str, args: Vec<(Value, Taint)>) -> Exec<(Value, Taint)> {
        let class = self.heap[o].class.clone();
        let l = self.heap[o].lib.as_ref().unwrap();
        if l.must_call.iter().any(|m| m == method) {
            self.close(o);
            self.report.stdout.push(format!("{CLOSE_EVENT}{class}.{method}()"));
            return Ok((Value::Null, None));
        }
        if let Some(x) = self.closed_in_chain(o, &mut BTreeSet::new()) {
            self.report.use_after_close.push(UseAfterClose { site: self.heap[x].site, method: method.to_string(), step: self.steps });
        }
        let spec = self.lib.method(&class, method).cloned();
        for (i, (v, taint)) in args.iter().enumerate() {
            if spec.as_ref().is_some_and(|s| s.param(i) == ParamMode::Retaining) {
                let tags = self.holder_tags(o);
                self.tag(v, &tags);
                self.note_escape(taint, &class);
                if let Value::Ref(x) = v {
                    let l = self.heap[o].lib.as_mut().unwrap();
                    if !l.retained.contains(x) && class != "List" {
                        l.retained.push(*x);
                    }
                }
            }
        }
        let rendered: Vec<String> = args.iter().map(|(v, _)| self.render(v)).collect();
        self.report.stdout.push(format!("{class}.{method}({})", rendered.join(", ")));
        let l = self.heap[o].lib.as_mut().unwrap();
        let result = match (class.as_str(), method) {
            ("List", "add") => {
                l.items.push(args.into_iter().next().map(|a| a.0).unwrap_or(Value::Null));
                Value::Null
            }
            ("List", "get") => match args.first().map(|a| &a.0) {
                Some(Value::Int(i)) => l.items.get(*i as usize).cloned().unwrap_or(Value::Null),
                _ => Value::Null,
            },
            ("List", "size") => Value::Int(l.items.len() as i64),
            _ => Value::Null,
        };
        Ok((result, None))
    }
}
