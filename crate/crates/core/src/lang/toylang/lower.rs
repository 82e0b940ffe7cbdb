//! Syntax tree to executable nodes, with static name resolution.
//!
//! A scope's variables are the names assigned anywhere in it (not inside
//! nested functions), so resolution does not depend on statement order.
//! Functions see their parameters, their own assigned names, and every
//! enclosing scope; assigning a name visible in an enclosing scope writes
//! that outer variable.

use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;

use super::syntax::{Expr, Span, Stmt, StmtKind};
use crate::node::{Node, NodeId, NodeKind, RootId, RootNode, SlotDescriptor, Tag, TagSet, NO_SLOT};
use crate::source::Source;
use crate::value::Value;

pub const LANGUAGE_ID: &str = "toylang";
pub const MAIN_NAME: &str = "main";

pub(crate) struct Ctx<'a> {
    pub source: Option<&'a Rc<Source>>,
    pub builtins: &'a [Rc<str>],
    pub first: RootId,
    pub roots: Vec<Option<RootNode>>,
}

enum Resolved {
    Local(u32),
    Outer(u32, u32),
    Builtin(u32),
    Unknown,
}

pub(crate) struct Builder<'r> {
    pub root: &'r mut RootNode,
    /// Slot names of enclosing roots, innermost first.
    pub enclosing: Vec<Vec<Rc<str>>>,
    /// Fragments are untagged, carry no sections and never spill.
    pub inline: bool,
    temps: u32,
}

fn statement() -> TagSet {
    TagSet::of(&[Tag::Statement])
}

fn expression() -> TagSet {
    TagSet::of(&[Tag::Expression])
}

/// Names assigned in `stmts`, in first-appearance order, not descending into
/// function bodies.
pub fn assigned_names(stmts: &[Stmt], out: &mut Vec<String>) {
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
                assigned_names(then_branch, out);
                if let Some(e) = else_branch {
                    assigned_names(e, out);
                }
            }
            StmtKind::While { body, .. } => assigned_names(body, out),
            StmtKind::Return(_) | StmtKind::Expr(_) => {}
        }
    }
}

pub(crate) fn lower_program(stmts: &[Stmt], cx: &mut Ctx<'_>) -> Vec<RootNode> {
    let source = cx.source.expect("program lowering needs a source");
    let mut main = RootNode::new(cx.first, MAIN_NAME, LANGUAGE_ID);
    main.section = source.section(0, source.char_len()).ok();
    let mut names = Vec::new();
    assigned_names(stmts, &mut names);
    main.slots = names
        .into_iter()
        .map(|n| SlotDescriptor {
            name: Rc::from(n.as_str()),
            internal: false,
        })
        .collect();
    cx.roots.push(None);
    let span = Span::new(0, source.char_len());
    {
        let mut b = Builder::new(&mut main, Vec::new(), false);
        let body = b.block(stmts, cx, Some(span), true);
        b.root.set_body(body);
    }
    cx.roots[0] = Some(main);
    core::mem::take(&mut cx.roots)
        .into_iter()
        .map(|r| r.expect("every reserved root is filled"))
        .collect()
}

impl<'r> Builder<'r> {
    pub fn new(root: &'r mut RootNode, enclosing: Vec<Vec<Rc<str>>>, inline: bool) -> Self {
        Builder {
            root,
            enclosing,
            inline,
            temps: 0,
        }
    }

    fn add(&mut self, cx: &Ctx<'_>, kind: NodeKind, tags: TagSet, span: Option<Span>) -> NodeId {
        let (tags, section) = if self.inline {
            (TagSet::EMPTY, None)
        } else {
            let section = match (span, cx.source) {
                (Some(s), Some(src)) => src.section(s.start as usize, s.len as usize).ok(),
                _ => None,
            };
            (tags, section)
        };
        self.root.add_node(Node::new(kind, tags, section))
    }

    fn resolve(&self, name: &str, cx: &Ctx<'_>) -> Resolved {
        if let Some(i) = self.root.slots.iter().position(|s| &*s.name == name) {
            return Resolved::Local(i as u32);
        }
        for (depth, scope) in self.enclosing.iter().enumerate() {
            if let Some(i) = scope.iter().position(|s| &**s == name) {
                return Resolved::Outer(depth as u32 + 1, i as u32);
            }
        }
        if let Some(i) = cx.builtins.iter().position(|b| &**b == name) {
            return Resolved::Builtin(i as u32);
        }
        Resolved::Unknown
    }

    fn name_const(&mut self, name: &str) -> u32 {
        let i = self.root.consts.len() as u32;
        self.root.consts.push(Value::str(name));
        i
    }

    fn temp_slot(&mut self) -> u32 {
        let slot = self.root.slots.len() as u32;
        let name = alloc::format!("$tmp{}", self.temps);
        self.temps += 1;
        self.root.slots.push(SlotDescriptor {
            name: Rc::from(name.as_str()),
            internal: true,
        });
        slot
    }

    pub fn block(&mut self, stmts: &[Stmt], cx: &mut Ctx<'_>, span: Option<Span>, root_body: bool) -> NodeId {
        let ids: Vec<NodeId> = stmts.iter().map(|s| self.stmt(s, cx)).collect();
        let list = self.root.add_list(&ids);
        let tags = if root_body {
            TagSet::of(&[Tag::Root])
        } else {
            TagSet::EMPTY
        };
        self.add(
            cx,
            NodeKind::Block { stmts: list },
            tags,
            if root_body { span } else { None },
        )
    }

    fn assign(&mut self, name: &str, value: NodeId, cx: &mut Ctx<'_>, span: Span) -> NodeId {
        let kind = match self.resolve(name, cx) {
            Resolved::Local(slot) => NodeKind::SetLocal { slot, value },
            Resolved::Outer(depth, slot) => NodeKind::SetOuter { depth, slot, value },
            Resolved::Builtin(_) | Resolved::Unknown => NodeKind::SetByName {
                name: self.name_const(name),
                value,
            },
        };
        self.add(cx, kind, statement(), Some(span))
    }

    pub fn stmt(&mut self, s: &Stmt, cx: &mut Ctx<'_>) -> NodeId {
        match &s.kind {
            StmtKind::Assign { name, value } => {
                let v = self.expr(value, cx);
                self.assign(name, v, cx, s.span)
            }
            StmtKind::FnDecl { name, params, body } => {
                let root = self.function(name, params, body, s.span, cx);
                let closure = self.add(cx, NodeKind::Closure { root }, TagSet::EMPTY, None);
                self.assign(name, closure, cx, s.span)
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let cond = self.expr(cond, cx);
                let then_branch = self.block(then_branch, cx, None, false);
                let else_branch = else_branch.as_ref().map(|e| self.block(e, cx, None, false));
                self.add(
                    cx,
                    NodeKind::If {
                        cond,
                        then_branch,
                        else_branch,
                    },
                    statement(),
                    Some(s.span),
                )
            }
            StmtKind::While { cond, body } => {
                let cond = self.expr(cond, cx);
                let body = self.block(body, cx, None, false);
                self.add(cx, NodeKind::While { cond, body }, statement(), Some(s.span))
            }
            StmtKind::Return(value) => {
                let value = value.as_ref().map(|v| self.expr(v, cx));
                self.add(cx, NodeKind::Return { value }, statement(), Some(s.span))
            }
            StmtKind::Expr(e) => {
                let expr = self.expr(e, cx);
                self.add(cx, NodeKind::ExprStmt { expr }, statement(), Some(s.span))
            }
        }
    }

    fn function(&mut self, name: &str, params: &[String], body: &[Stmt], span: Span, cx: &mut Ctx<'_>) -> RootId {
        let index = cx.roots.len();
        cx.roots.push(None);
        let id = RootId(cx.first.0 + index as u32);
        let mut root = RootNode::new(id, name, LANGUAGE_ID);
        root.section = cx
            .source
            .and_then(|src| src.section(span.start as usize, span.len as usize).ok());
        root.arity = params.len();
        root.lexical_parent = Some(self.root.id);
        let mut enclosing = alloc::vec![self.root.slots.iter().map(|s| s.name.clone()).collect::<Vec<_>>()];
        enclosing.extend(self.enclosing.iter().cloned());
        let visible = |n: &str| enclosing.iter().any(|scope| scope.iter().any(|s| &**s == n));
        let mut names: Vec<String> = params.to_vec();
        let mut assigned = Vec::new();
        assigned_names(body, &mut assigned);
        for n in assigned {
            if !names.contains(&n) && !visible(&n) {
                names.push(n);
            }
        }
        root.slots = names
            .into_iter()
            .map(|n| SlotDescriptor {
                name: Rc::from(n.as_str()),
                internal: false,
            })
            .collect();
        {
            let mut b = Builder::new(&mut root, enclosing, false);
            let body = b.block(body, cx, Some(span), true);
            b.root.set_body(body);
        }
        cx.roots[index] = Some(root);
        id
    }

    pub fn expr(&mut self, e: &Expr, cx: &mut Ctx<'_>) -> NodeId {
        let span = Some(e.span());
        match e {
            Expr::Int(i, _) => self.add(cx, NodeKind::Int(*i), expression(), span),
            Expr::Float(x, _) => self.add(cx, NodeKind::Float(*x), expression(), span),
            Expr::Bool(b, _) => self.add(cx, NodeKind::Bool(*b), expression(), span),
            Expr::Null(_) => self.add(cx, NodeKind::Null, expression(), span),
            Expr::Str(s, _) => {
                let i = self.root.consts.len() as u32;
                self.root.consts.push(Value::str(s));
                self.add(cx, NodeKind::Str(i), expression(), span)
            }
            Expr::Var(name, _) => {
                let kind = match self.resolve(name, cx) {
                    Resolved::Local(slot) => NodeKind::Local { slot },
                    Resolved::Outer(depth, slot) => NodeKind::Outer { depth, slot },
                    Resolved::Builtin(index) => NodeKind::Builtin { index },
                    Resolved::Unknown => NodeKind::ByName {
                        name: self.name_const(name),
                    },
                };
                self.add(cx, kind, expression(), span)
            }
            Expr::Binary { op, lhs, rhs, .. } => {
                let l = self.expr(lhs, cx);
                let spill = if !self.inline && rhs.contains_call() {
                    self.temp_slot()
                } else {
                    NO_SLOT
                };
                let r = self.expr(rhs, cx);
                self.add(
                    cx,
                    NodeKind::Binary {
                        op: *op,
                        lhs: l,
                        rhs: r,
                        spill,
                    },
                    expression(),
                    span,
                )
            }
            Expr::Unary { op, operand, .. } => {
                let operand = self.expr(operand, cx);
                self.add(cx, NodeKind::Unary { op: *op, operand }, expression(), span)
            }
            Expr::And(lhs, rhs, _) => {
                let lhs = self.expr(lhs, cx);
                let rhs = self.expr(rhs, cx);
                self.add(cx, NodeKind::And { lhs, rhs }, expression(), span)
            }
            Expr::Or(lhs, rhs, _) => {
                let lhs = self.expr(lhs, cx);
                let rhs = self.expr(rhs, cx);
                self.add(cx, NodeKind::Or { lhs, rhs }, expression(), span)
            }
            Expr::Call { callee, args, .. } => {
                let callee = self.expr(callee, cx);
                let ids: Vec<NodeId> = args.iter().map(|a| self.expr(a, cx)).collect();
                let args = self.root.add_list(&ids);
                self.add(
                    cx,
                    NodeKind::Call { callee, args },
                    TagSet::of(&[Tag::Call, Tag::Expression]),
                    span,
                )
            }
        }
    }
}
