//! Parsed toylang programs, before lowering to executable nodes.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::node::{BinOp, UnOp};

/// Code point range `[start, start + len)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: u32,
    pub len: u32,
}

impl Span {
    pub fn new(start: usize, len: usize) -> Span {
        Span {
            start: start as u32,
            len: len as u32,
        }
    }

    pub fn end(self) -> usize {
        (self.start + self.len) as usize
    }

    pub fn to(self, other: Span) -> Span {
        Span::new(self.start as usize, other.end() - self.start as usize)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Int(i64, Span),
    Float(f64, Span),
    Str(String, Span),
    Bool(bool, Span),
    Null(Span),
    Var(String, Span),
    Binary {
        op: BinOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
        span: Span,
    },
    Unary {
        op: UnOp,
        operand: Box<Expr>,
        span: Span,
    },
    And(Box<Expr>, Box<Expr>, Span),
    Or(Box<Expr>, Box<Expr>, Span),
    Call {
        callee: Box<Expr>,
        args: Vec<Expr>,
        span: Span,
    },
}

impl Expr {
    pub fn span(&self) -> Span {
        match self {
            Expr::Int(_, s)
            | Expr::Float(_, s)
            | Expr::Str(_, s)
            | Expr::Bool(_, s)
            | Expr::Null(s)
            | Expr::Var(_, s)
            | Expr::And(_, _, s)
            | Expr::Or(_, _, s) => *s,
            Expr::Binary { span, .. } | Expr::Unary { span, .. } | Expr::Call { span, .. } => *span,
        }
    }

    pub(crate) fn set_span(&mut self, new: Span) {
        match self {
            Expr::Int(_, s)
            | Expr::Float(_, s)
            | Expr::Str(_, s)
            | Expr::Bool(_, s)
            | Expr::Null(s)
            | Expr::Var(_, s)
            | Expr::And(_, _, s)
            | Expr::Or(_, _, s) => *s = new,
            Expr::Binary { span, .. } | Expr::Unary { span, .. } | Expr::Call { span, .. } => *span = new,
        }
    }

    /// Whether evaluating the expression may call a function.
    pub fn contains_call(&self) -> bool {
        match self {
            Expr::Call { .. } => true,
            Expr::Binary { lhs, rhs, .. } | Expr::And(lhs, rhs, _) | Expr::Or(lhs, rhs, _) => {
                lhs.contains_call() || rhs.contains_call()
            }
            Expr::Unary { operand, .. } => operand.contains_call(),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub enum StmtKind {
    Assign {
        name: String,
        value: Expr,
    },
    FnDecl {
        name: String,
        params: Vec<String>,
        body: Vec<Stmt>,
    },
    If {
        cond: Expr,
        then_branch: Vec<Stmt>,
        /// `else if` chains nest as a one-statement else branch.
        else_branch: Option<Vec<Stmt>>,
    },
    While {
        cond: Expr,
        body: Vec<Stmt>,
    },
    Return(Option<Expr>),
    Expr(Expr),
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Program {
    pub stmts: Vec<Stmt>,
}

impl Program {
    /// Spans of every statement in source order, including nested ones.
    pub fn statement_spans(&self) -> Vec<Span> {
        fn walk(stmts: &[Stmt], out: &mut Vec<Span>) {
            for s in stmts {
                out.push(s.span);
                match &s.kind {
                    StmtKind::FnDecl { body, .. } | StmtKind::While { body, .. } => walk(body, out),
                    StmtKind::If {
                        then_branch,
                        else_branch,
                        ..
                    } => {
                        walk(then_branch, out);
                        if let Some(e) = else_branch {
                            walk(e, out);
                        }
                    }
                    _ => {}
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.stmts, &mut out);
        out
    }
}
