//! Random toylang programs that terminate.
//!
//! Functions only call functions declared before them, except for one
//! optional self-recursive function with a shrinking argument. Loop
//! counters are written only by their initialiser and increment.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::eval::{self, Failure};

#[derive(Clone, Debug)]
pub struct GenConfig {
    pub max_functions: usize,
    pub max_block: usize,
    pub max_nesting: usize,
    pub max_loop: i64,
    /// Allow division and modulo, which can fail at run time.
    pub fallible: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            max_functions: 3,
            max_block: 4,
            max_nesting: 2,
            max_loop: 4,
            fallible: true,
        }
    }
}

struct Fun {
    name: String,
    arity: usize,
}

struct Gen<'a> {
    rng: &'a mut StdRng,
    cfg: &'a GenConfig,
    out: String,
    funs: Vec<Fun>,
    /// Readable names in the current scope.
    vars: Vec<String>,
    /// Loop counters that must not be assigned.
    frozen: Vec<String>,
    prefix: String,
    loops: usize,
    locals: usize,
    in_fn: bool,
}

impl Gen<'_> {
    fn line(&mut self, indent: usize, text: &str) {
        for _ in 0..indent {
            self.out.push_str("  ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn int_expr(&mut self, depth: usize) -> String {
        let atom = depth == 0 || self.rng.gen_bool(0.35);
        if atom {
            if !self.vars.is_empty() && self.rng.gen_bool(0.6) {
                return self.vars.choose(self.rng).unwrap().clone();
            }
            return self.rng.gen_range(-3..10).to_string();
        }
        match self.rng.gen_range(0..10) {
            0..=5 => {
                let mut ops = vec!["+", "-", "*"];
                if self.cfg.fallible {
                    ops.extend(["/", "%"]);
                }
                let op = ops.choose(self.rng).unwrap();
                format!("{} {} {}", self.int_expr(depth - 1), op, self.int_atom(depth - 1))
            }
            6 => format!("-{}", self.int_atom(depth - 1)),
            7 => {
                let f = ["abs", "max", "min"].choose(self.rng).unwrap();
                if *f == "abs" {
                    format!("abs({})", self.int_expr(depth - 1))
                } else {
                    format!("{f}({}, {})", self.int_expr(depth - 1), self.int_expr(depth - 1))
                }
            }
            _ => match self.call(depth - 1) {
                Some(c) => c,
                None => self.int_expr(depth - 1),
            },
        }
    }

    fn int_atom(&mut self, depth: usize) -> String {
        let e = self.int_expr(depth);
        if e.contains(' ') || e.starts_with('-') {
            format!("({e})")
        } else {
            e
        }
    }

    fn call(&mut self, depth: usize) -> Option<String> {
        if self.funs.is_empty() {
            return None;
        }
        let i = self.rng.gen_range(0..self.funs.len());
        let (name, arity) = (self.funs[i].name.clone(), self.funs[i].arity);
        let args: Vec<String> = (0..arity).map(|_| self.int_expr(depth)).collect();
        Some(format!("{name}({})", args.join(", ")))
    }

    fn cond(&mut self, depth: usize) -> String {
        let op = ["<", "<=", ">", ">=", "==", "!="].choose(self.rng).unwrap();
        let c = format!("{} {} {}", self.int_expr(depth), op, self.int_expr(depth));
        match self.rng.gen_range(0..8) {
            0 => format!("!({c})"),
            1 => format!("{c} && {} < {}", self.int_expr(0), self.int_expr(0)),
            2 => format!("{c} || {} == {}", self.int_expr(0), self.int_expr(0)),
            _ => c,
        }
    }

    fn fresh_local(&mut self) -> String {
        let n = format!("{}v{}", self.prefix, self.locals);
        self.locals += 1;
        n
    }

    fn assign_target(&mut self) -> String {
        let writable: Vec<String> = self.vars.iter().filter(|v| !self.frozen.contains(v)).cloned().collect();
        if writable.is_empty() || self.rng.gen_bool(0.4) {
            self.fresh_local()
        } else {
            writable.choose(self.rng).unwrap().clone()
        }
    }

    fn block(&mut self, indent: usize, nesting: usize) {
        let n = self.rng.gen_range(1..=self.cfg.max_block);
        for _ in 0..n {
            self.stmt(indent, nesting);
        }
    }

    fn stmt(&mut self, indent: usize, nesting: usize) {
        let compound = nesting < self.cfg.max_nesting;
        match self.rng.gen_range(0..12) {
            0..=3 => {
                let e = self.int_expr(2);
                let v = self.assign_target();
                self.line(indent, &format!("{v} = {e}"));
                if !self.vars.contains(&v) {
                    self.vars.push(v);
                }
            }
            4 | 5 => {
                let e = self.int_expr(2);
                self.line(indent, &format!("print({e})"));
            }
            6 | 7 if compound => {
                let c = self.cond(1);
                self.line(indent, &format!("if {c} {{"));
                let saved = self.vars.len();
                self.block(indent + 1, nesting + 1);
                self.vars.truncate(saved);
                if self.rng.gen_bool(0.5) {
                    self.line(indent, "} else {");
                    self.block(indent + 1, nesting + 1);
                    self.vars.truncate(saved);
                }
                self.line(indent, "}");
            }
            8 | 9 if compound => {
                let l = format!("{}l{}", self.prefix, self.loops);
                self.loops += 1;
                let k = self.rng.gen_range(0..=self.cfg.max_loop);
                self.line(indent, &format!("{l} = 0"));
                self.line(indent, &format!("while {l} < {k} {{"));
                self.vars.push(l.clone());
                self.frozen.push(l.clone());
                let saved = self.vars.len();
                self.block(indent + 1, nesting + 1);
                self.vars.truncate(saved);
                self.line(indent + 1, &format!("{l} = {l} + 1"));
                self.line(indent, "}");
            }
            10 if self.in_fn && self.rng.gen_bool(0.3) => {
                let e = self.int_expr(1);
                self.line(indent, &format!("return {e}"));
            }
            _ => match self.call(2) {
                Some(c) => self.line(indent, &c),
                None => {
                    let e = self.int_expr(1);
                    self.line(indent, &format!("print({e})"));
                }
            },
        }
    }

    fn function(&mut self, k: usize, globals: &[String]) {
        let name = format!("f{k}");
        let arity = self.rng.gen_range(0..=2);
        let params: Vec<String> = (0..arity).map(|i| format!("f{k}_p{i}")).collect();
        self.line(0, &format!("fn {name}({}) {{", params.join(", ")));
        self.prefix = format!("f{k}_");
        self.vars = globals.iter().cloned().chain(params.iter().cloned()).collect();
        self.frozen.clear();
        self.in_fn = true;
        self.block(1, 0);
        let e = self.int_expr(1);
        self.line(1, &format!("return {e}"));
        self.line(0, "}");
        self.funs.push(Fun { name, arity });
    }

    fn recursive(&mut self) {
        self.line(0, "fn rec(n) {");
        self.line(1, "if n <= 0 {");
        self.line(2, "return 0");
        self.line(1, "}");
        self.line(1, "return n + rec(n - 1)");
        self.line(0, "}");
    }
}

pub fn program(seed: u64, cfg: &GenConfig) -> String {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut g = Gen {
        rng: &mut rng,
        cfg,
        out: String::new(),
        funs: Vec::new(),
        vars: Vec::new(),
        frozen: Vec::new(),
        prefix: String::new(),
        loops: 0,
        locals: 0,
        in_fn: false,
    };
    let globals: Vec<String> = (0..g.rng.gen_range(1..=3)).map(|i| format!("g{i}")).collect();
    for v in &globals {
        let n = g.rng.gen_range(0..8);
        g.line(0, &format!("{v} = {n}"));
    }
    if g.rng.gen_bool(0.3) {
        g.recursive();
        g.funs.push(Fun {
            name: "rec".into(),
            arity: 1,
        });
    }
    let nf = g.rng.gen_range(0..=cfg.max_functions);
    for k in 0..nf {
        g.function(k, &globals);
    }
    g.prefix = "m".into();
    g.vars = globals;
    g.frozen.clear();
    g.in_fn = false;
    g.locals = 0;
    g.block(0, 0);
    if g.rng.gen_bool(0.5) {
        let e = g.int_expr(1);
        g.line(0, &format!("return {e}"));
    }
    g.out
}

/// Keeps drawing until the reference evaluator finishes within its limits.
pub fn terminating_program(seed: u64, cfg: &GenConfig) -> String {
    let mut s = seed;
    loop {
        let p = program(s, cfg);
        if eval::run(&p).result != Err(Failure::Diverged) {
            return p;
        }
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    }
}
