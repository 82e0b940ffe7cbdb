//! Naive recursive toylang evaluator over the syntax tree.
//!
//! Environments are name-keyed maps chained to the defining scope. It
//! counts statement entries and user-function invocations directly.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::rc::Rc;

use probevm_core::lang::toylang::parse_program;
use probevm_core::lang::toylang::syntax::{Expr, Span, Stmt, StmtKind};
use probevm_core::node::{BinOp, UnOp};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Failure {
    Syntax,
    Runtime,
    Internal,
    Exit(i64),
    /// The statement or depth budget ran out.
    Diverged,
}

/// One statement entry: span, call depth (top level = 1), enclosing
/// function name.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StmtEvent {
    pub span: Span,
    pub depth: usize,
    pub root: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub output: String,
    /// Display string of the program result.
    pub result: Result<String, Failure>,
    pub trace: Vec<StmtEvent>,
    pub counts: BTreeMap<Span, u64>,
    /// Invocations per user function name, `main` included.
    pub calls: BTreeMap<String, u64>,
}

impl Outcome {
    pub fn statement_spans(&self) -> Vec<Span> {
        self.trace.iter().map(|e| e.span).collect()
    }
}

#[derive(Clone)]
enum Val {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(Rc<str>),
    Null,
    Closure(Rc<Closure>),
    Native(&'static str),
}

struct Closure {
    name: String,
    params: Vec<String>,
    body: Rc<Vec<Stmt>>,
    env: Rc<Env>,
}

struct Env {
    vars: RefCell<HashMap<String, Option<Val>>>,
    parent: Option<Rc<Env>>,
}

impl Env {
    fn find(self: &Rc<Env>, name: &str) -> Option<Rc<Env>> {
        let mut env = Some(self.clone());
        while let Some(e) = env {
            if e.vars.borrow().contains_key(name) {
                return Some(e);
            }
            env = e.parent.clone();
        }
        None
    }
}

enum Stop {
    Return(Val),
    Fail(Failure),
}

const NATIVES: [(&str, Option<usize>); 8] = [
    ("print", None),
    ("clock", Some(0)),
    ("exit", Some(1)),
    ("str", Some(1)),
    ("__fault", Some(0)),
    ("abs", Some(1)),
    ("max", Some(2)),
    ("min", Some(2)),
];

pub fn float_text(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else if x.fract() == 0.0 && x.abs() < 1e16 {
        format!("{x:.1}")
    } else {
        format!("{x}")
    }
}

fn show(v: &Val) -> String {
    match v {
        Val::Int(i) => i.to_string(),
        Val::Float(x) => float_text(*x),
        Val::Bool(b) => b.to_string(),
        Val::Str(s) => s.to_string(),
        Val::Null => "null".into(),
        Val::Closure(c) => format!("<fn {}>", c.name),
        Val::Native(n) => format!("<fn {n}>"),
    }
}

fn same(a: &Val, b: &Val) -> bool {
    match (a, b) {
        (Val::Int(x), Val::Int(y)) => x == y,
        (Val::Float(x), Val::Float(y)) => x == y,
        (Val::Int(x), Val::Float(y)) | (Val::Float(y), Val::Int(x)) => *x as f64 == *y,
        (Val::Bool(x), Val::Bool(y)) => x == y,
        (Val::Str(x), Val::Str(y)) => x == y,
        (Val::Null, Val::Null) => true,
        (Val::Closure(x), Val::Closure(y)) => Rc::ptr_eq(x, y),
        (Val::Native(x), Val::Native(y)) => x == y,
        _ => false,
    }
}

fn assigned(stmts: &[Stmt], out: &mut Vec<String>) {
    for s in stmts {
        match &s.kind {
            StmtKind::Assign { name, .. } | StmtKind::FnDecl { name, .. } => {
                if !out.contains(name) {
                    out.push(name.clone());
                }
            }
            StmtKind::If {
                then_branch,
                else_branch,
                ..
            } => {
                assigned(then_branch, out);
                if let Some(e) = else_branch {
                    assigned(e, out);
                }
            }
            StmtKind::While { body, .. } => assigned(body, out),
            _ => {}
        }
    }
}

fn rt<T>() -> Result<T, Stop> {
    Err(Stop::Fail(Failure::Runtime))
}

fn arith(op: BinOp, a: &Val, b: &Val) -> Result<Val, Stop> {
    use BinOp::*;
    if op == Eq {
        return Ok(Val::Bool(same(a, b)));
    }
    if op == Ne {
        return Ok(Val::Bool(!same(a, b)));
    }
    match (a, b) {
        (Val::Int(x), Val::Int(y)) => {
            let (x, y) = (*x, *y);
            let v = match op {
                Add => x.checked_add(y).map(Val::Int),
                Sub => x.checked_sub(y).map(Val::Int),
                Mul => x.checked_mul(y).map(Val::Int),
                Div | DivIeee => x.checked_div(y).map(Val::Int),
                Rem => x.checked_rem(y).map(Val::Int),
                Lt => Some(Val::Bool(x < y)),
                Le => Some(Val::Bool(x <= y)),
                Gt => Some(Val::Bool(x > y)),
                Ge => Some(Val::Bool(x >= y)),
                Eq | Ne => unreachable!(),
            };
            v.map_or_else(rt, Ok)
        }
        (Val::Int(_) | Val::Float(_), Val::Int(_) | Val::Float(_)) => {
            let f = |v: &Val| match v {
                Val::Int(i) => *i as f64,
                Val::Float(x) => *x,
                _ => unreachable!(),
            };
            let (x, y) = (f(a), f(b));
            Ok(match op {
                Add => Val::Float(x + y),
                Sub => Val::Float(x - y),
                Mul => Val::Float(x * y),
                Div if y == 0.0 => return rt(),
                Div | DivIeee => Val::Float(x / y),
                Rem => Val::Float(x % y),
                Lt => Val::Bool(x < y),
                Le => Val::Bool(x <= y),
                Gt => Val::Bool(x > y),
                Ge => Val::Bool(x >= y),
                Eq | Ne => unreachable!(),
            })
        }
        (Val::Str(x), Val::Str(y)) => Ok(match op {
            Add => Val::Str(format!("{x}{y}").into()),
            Lt => Val::Bool(x < y),
            Le => Val::Bool(x <= y),
            Gt => Val::Bool(x > y),
            Ge => Val::Bool(x >= y),
            _ => return rt(),
        }),
        _ => rt(),
    }
}

struct Machine {
    output: String,
    trace: Vec<StmtEvent>,
    counts: BTreeMap<Span, u64>,
    calls: BTreeMap<String, u64>,
    fuel: u64,
    depth: usize,
    max_depth: usize,
    names: Vec<String>,
}

pub struct Limits {
    pub statements: u64,
    pub depth: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            statements: 50_000,
            depth: 200,
        }
    }
}

pub fn run(text: &str) -> Outcome {
    run_with(text, &Limits::default())
}

pub fn run_with(text: &str, limits: &Limits) -> Outcome {
    let mut m = Machine {
        output: String::new(),
        trace: Vec::new(),
        counts: BTreeMap::new(),
        calls: BTreeMap::new(),
        fuel: limits.statements,
        depth: 1,
        max_depth: limits.depth,
        names: vec!["main".into()],
    };
    let result = match parse_program(text) {
        Err(_) => Err(Failure::Syntax),
        Ok(program) => {
            let mut names = Vec::new();
            assigned(&program.stmts, &mut names);
            let env = Rc::new(Env {
                vars: RefCell::new(names.into_iter().map(|n| (n, None)).collect()),
                parent: None,
            });
            *m.calls.entry("main".into()).or_default() += 1;
            match m.block(&program.stmts, &env) {
                Ok(()) => Ok("null".into()),
                Err(Stop::Return(v)) => Ok(show(&v)),
                Err(Stop::Fail(f)) => Err(f),
            }
        }
    };
    Outcome {
        output: m.output,
        result,
        trace: m.trace,
        counts: m.counts,
        calls: m.calls,
    }
}

impl Machine {
    fn block(&mut self, stmts: &[Stmt], env: &Rc<Env>) -> Result<(), Stop> {
        for s in stmts {
            self.stmt(s, env)?;
        }
        Ok(())
    }

    fn boolean(&mut self, e: &Expr, env: &Rc<Env>) -> Result<bool, Stop> {
        match self.expr(e, env)? {
            Val::Bool(b) => Ok(b),
            _ => rt(),
        }
    }

    fn stmt(&mut self, s: &Stmt, env: &Rc<Env>) -> Result<(), Stop> {
        if self.fuel == 0 {
            return Err(Stop::Fail(Failure::Diverged));
        }
        self.fuel -= 1;
        self.trace.push(StmtEvent {
            span: s.span,
            depth: self.depth,
            root: self.names.last().cloned().unwrap_or_default(),
        });
        *self.counts.entry(s.span).or_default() += 1;
        match &s.kind {
            StmtKind::Assign { name, value } => {
                let v = self.expr(value, env)?;
                self.assign(name, v, env)
            }
            StmtKind::FnDecl { name, params, body } => {
                let c = Closure {
                    name: name.clone(),
                    params: params.clone(),
                    body: Rc::new(body.clone()),
                    env: env.clone(),
                };
                self.assign(name, Val::Closure(Rc::new(c)), env)
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                if self.boolean(cond, env)? {
                    self.block(then_branch, env)
                } else if let Some(e) = else_branch {
                    self.block(e, env)
                } else {
                    Ok(())
                }
            }
            StmtKind::While { cond, body } => {
                while self.boolean(cond, env)? {
                    if self.fuel == 0 {
                        return Err(Stop::Fail(Failure::Diverged));
                    }
                    self.fuel -= 1;
                    self.block(body, env)?;
                }
                Ok(())
            }
            StmtKind::Return(value) => {
                let v = match value {
                    Some(e) => self.expr(e, env)?,
                    None => Val::Null,
                };
                Err(Stop::Return(v))
            }
            StmtKind::Expr(e) => self.expr(e, env).map(|_| ()),
        }
    }

    fn assign(&mut self, name: &str, v: Val, env: &Rc<Env>) -> Result<(), Stop> {
        match env.find(name) {
            Some(scope) => {
                scope.vars.borrow_mut().insert(name.into(), Some(v));
                Ok(())
            }
            None => rt(),
        }
    }

    fn lookup(&self, name: &str, env: &Rc<Env>) -> Result<Val, Stop> {
        if let Some(scope) = env.find(name) {
            return match scope.vars.borrow().get(name) {
                Some(Some(v)) => Ok(v.clone()),
                _ => rt(),
            };
        }
        match NATIVES.iter().find(|(n, _)| *n == name) {
            Some((n, _)) => Ok(Val::Native(n)),
            None => rt(),
        }
    }

    fn expr(&mut self, e: &Expr, env: &Rc<Env>) -> Result<Val, Stop> {
        match e {
            Expr::Int(i, _) => Ok(Val::Int(*i)),
            Expr::Float(x, _) => Ok(Val::Float(*x)),
            Expr::Str(s, _) => Ok(Val::Str(s.as_str().into())),
            Expr::Bool(b, _) => Ok(Val::Bool(*b)),
            Expr::Null(_) => Ok(Val::Null),
            Expr::Var(name, _) => self.lookup(name, env),
            Expr::Binary { op, lhs, rhs, .. } => {
                let a = self.expr(lhs, env)?;
                let b = self.expr(rhs, env)?;
                arith(*op, &a, &b)
            }
            Expr::Unary { op, operand, .. } => {
                let v = self.expr(operand, env)?;
                match (op, v) {
                    (UnOp::Not, Val::Bool(b)) => Ok(Val::Bool(!b)),
                    (UnOp::Neg, Val::Int(i)) => i.checked_neg().map(Val::Int).map_or_else(rt, Ok),
                    (UnOp::Neg, Val::Float(x)) => Ok(Val::Float(-x)),
                    _ => rt(),
                }
            }
            Expr::And(l, r, _) => Ok(Val::Bool(self.boolean(l, env)? && self.boolean(r, env)?)),
            Expr::Or(l, r, _) => Ok(Val::Bool(self.boolean(l, env)? || self.boolean(r, env)?)),
            Expr::Call { callee, args, .. } => {
                let f = self.expr(callee, env)?;
                let mut values = Vec::with_capacity(args.len());
                for a in args {
                    values.push(self.expr(a, env)?);
                }
                self.call(f, values)
            }
        }
    }

    fn call(&mut self, f: Val, args: Vec<Val>) -> Result<Val, Stop> {
        match f {
            Val::Native(name) => {
                let arity = NATIVES.iter().find(|(n, _)| *n == name).and_then(|(_, a)| *a);
                if arity.is_some_and(|a| a != args.len()) {
                    return rt();
                }
                self.native(name, args)
            }
            Val::Closure(c) => {
                if c.params.len() != args.len() {
                    return rt();
                }
                if self.depth >= self.max_depth {
                    return Err(Stop::Fail(Failure::Diverged));
                }
                let mut vars: HashMap<String, Option<Val>> =
                    c.params.iter().cloned().zip(args.into_iter().map(Some)).collect();
                let mut locals = Vec::new();
                assigned(&c.body, &mut locals);
                for n in locals {
                    if !vars.contains_key(&n) && c.env.find(&n).is_none() {
                        vars.insert(n, None);
                    }
                }
                let env = Rc::new(Env {
                    vars: RefCell::new(vars),
                    parent: Some(c.env.clone()),
                });
                *self.calls.entry(c.name.clone()).or_default() += 1;
                self.depth += 1;
                self.names.push(c.name.clone());
                let r = self.block(&c.body, &env);
                self.names.pop();
                self.depth -= 1;
                match r {
                    Ok(()) => Ok(Val::Null),
                    Err(Stop::Return(v)) => Ok(v),
                    Err(e) => Err(e),
                }
            }
            _ => rt(),
        }
    }

    fn native(&mut self, name: &str, args: Vec<Val>) -> Result<Val, Stop> {
        match name {
            "print" => {
                let parts: Vec<String> = args.iter().map(show).collect();
                self.output.push_str(&parts.join(" "));
                self.output.push('\n');
                Ok(Val::Null)
            }
            "clock" => Ok(Val::Float(0.0)),
            "exit" => match args[0] {
                Val::Int(code) => Err(Stop::Fail(Failure::Exit(code))),
                _ => rt(),
            },
            "str" => Ok(Val::Str(show(&args[0]).into())),
            "__fault" => Err(Stop::Fail(Failure::Internal)),
            // library functions, with the same comparisons as their guest
            // definitions
            "abs" => match arith(BinOp::Lt, &args[0], &Val::Int(0))? {
                Val::Bool(true) => match &args[0] {
                    Val::Int(i) => i.checked_neg().map(Val::Int).map_or_else(rt, Ok),
                    Val::Float(x) => Ok(Val::Float(-x)),
                    _ => rt(),
                },
                _ => Ok(args[0].clone()),
            },
            "max" | "min" => {
                let op = if name == "max" { BinOp::Gt } else { BinOp::Lt };
                match arith(op, &args[0], &args[1])? {
                    Val::Bool(true) => Ok(args[0].clone()),
                    _ => Ok(args[1].clone()),
                }
            }
            _ => rt(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_output() {
        let o = run("i = 0\nwhile i < 3 {\n  i = i + 1\n  print(i)\n}\nreturn i");
        assert_eq!(o.output, "1\n2\n3\n");
        assert_eq!(o.result, Ok("3".into()));
        assert_eq!(o.trace.len(), 3 + 3 * 2);
        assert_eq!(o.counts.values().copied().max(), Some(3));
    }

    #[test]
    fn scoping_rules() {
        let o = run("n = 0\nfn inc() {\n  n = n + 1\n  k = 5\n}\ninc()\ninc()\nprint(n)");
        assert_eq!(o.output, "2\n");
        assert_eq!(o.calls["inc"], 2);
        let o = run("fn mk() {\n  c = 0\n  fn step() {\n    c = c + 1\n    return c\n  }\n  return step\n}\ns = mk()\ns()\nprint(s())");
        assert_eq!(o.output, "2\n");
    }

    #[test]
    fn failures() {
        assert_eq!(run("x = 1 / 0").result, Err(Failure::Runtime));
        assert_eq!(run("print(y)").result, Err(Failure::Runtime));
        assert_eq!(run("exit(4)").result, Err(Failure::Exit(4)));
        assert_eq!(run("x = (").result, Err(Failure::Syntax));
        assert_eq!(run("while true { }").result, Err(Failure::Diverged));
        assert_eq!(run("fn f() { return f() }\nf()").result, Err(Failure::Diverged));
    }

    #[test]
    fn depth_and_roots_in_trace() {
        let o = run("fn f() {\n  return 1\n}\nf()");
        let t: Vec<(usize, &str)> = o.trace.iter().map(|e| (e.depth, e.root.as_str())).collect();
        assert_eq!(t, [(1, "main"), (1, "main"), (2, "f")]);
    }
}
