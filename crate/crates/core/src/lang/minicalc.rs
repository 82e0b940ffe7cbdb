//! minicalc: one float expression or assignment per line. Expression lines
//! print their value. Every line is both a statement and an expression.
//!
//! ```text
//! line   := (IDENT '=' expr | expr)? ('#' comment)?
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/' | '%') factor)*
//! factor := '-' factor | NUMBER | IDENT | '(' expr ')'
//! ```

use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;

use crate::exception::{ExceptionKind, GuestException};
use crate::node::{BinOp, Node, NodeId, NodeKind, RootNode, SlotDescriptor, Tag, TagSet, UnOp};
use crate::source::Source;
use crate::spi::{InlineCx, LanguageFrontend, ParseCx};
use crate::value::Value;

pub const LANGUAGE_ID: &str = "minicalc";

#[derive(Clone, Copy, Debug, Default)]
pub struct MiniCalc;

/// minicalc rendering: integral floats print without a fractional part.
pub fn display(value: &Value) -> String {
    match value {
        Value::Float(x) if x.is_nan() => "nan".into(),
        Value::Float(x) if x.is_infinite() => (if *x > 0.0 { "inf" } else { "-inf" }).into(),
        Value::Float(x) if *x == (*x as i64) as f64 && x.abs() < 1e15 => alloc::format!("{}", *x as i64),
        Value::Float(x) => alloc::format!("{x}"),
        other => crate::lang::toylang::display(other),
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Expr {
    Num(f64, usize, usize),
    Var(String, usize, usize),
    Neg(alloc::boxed::Box<Expr>, usize, usize),
    Bin(BinOp, alloc::boxed::Box<Expr>, alloc::boxed::Box<Expr>, usize, usize),
}

impl Expr {
    fn span(&self) -> (usize, usize) {
        match self {
            Expr::Num(_, s, e) | Expr::Var(_, s, e) | Expr::Neg(_, s, e) | Expr::Bin(_, _, _, s, e) => (*s, *e),
        }
    }
}

enum Line {
    Assign(String, Expr, usize, usize),
    Expr(Expr),
}

struct LineParser<'a> {
    chars: &'a [char],
    pos: usize,
    end: usize,
}

type PResult<T> = Result<T, (String, usize)>;

impl<'a> LineParser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.end && matches!(self.chars[self.pos], ' ' | '\t' | '\r') {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        (self.pos < self.end).then(|| self.chars[self.pos])
    }

    fn at_end(&mut self) -> bool {
        matches!(self.peek(), None | Some('#'))
    }

    fn ident(&mut self) -> Option<(String, usize, usize)> {
        self.skip_ws();
        let start = self.pos;
        if start < self.end && (self.chars[start].is_alphabetic() || self.chars[start] == '_') {
            while self.pos < self.end && (self.chars[self.pos].is_alphanumeric() || self.chars[self.pos] == '_') {
                self.pos += 1;
            }
            return Some((self.chars[start..self.pos].iter().collect(), start, self.pos));
        }
        None
    }

    fn line(&mut self) -> PResult<Option<Line>> {
        if self.at_end() {
            return Ok(None);
        }
        let save = self.pos;
        if let Some((name, start, _)) = self.ident() {
            if self.peek() == Some('=') {
                self.pos += 1;
                let value = self.expr()?;
                let end = value.span().1;
                self.finish()?;
                return Ok(Some(Line::Assign(name, value, start, end)));
            }
        }
        self.pos = save;
        let e = self.expr()?;
        self.finish()?;
        Ok(Some(Line::Expr(e)))
    }

    fn finish(&mut self) -> PResult<()> {
        if self.at_end() {
            Ok(())
        } else {
            Err((alloc::format!("unexpected `{}`", self.chars[self.pos]), self.pos))
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            let (s, e) = (lhs.span().0, rhs.span().1);
            lhs = Expr::Bin(op, lhs.into(), rhs.into(), s, e);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.factor()?;
        while let Some(c @ ('*' | '/' | '%')) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            let op = match c {
                '*' => BinOp::Mul,
                '/' => BinOp::DivIeee,
                _ => BinOp::Rem,
            };
            let (s, e) = (lhs.span().0, rhs.span().1);
            lhs = Expr::Bin(op, lhs.into(), rhs.into(), s, e);
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> PResult<Expr> {
        let start = self.pos;
        match self.peek() {
            Some('-') => {
                let start = self.pos;
                self.pos += 1;
                let inner = self.factor()?;
                let end = inner.span().1;
                Ok(Expr::Neg(inner.into(), start, end))
            }
            Some('(') => {
                let open = self.pos;
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(("expected `)`".into(), self.pos));
                }
                self.pos += 1;
                Ok(match inner {
                    Expr::Num(x, ..) => Expr::Num(x, open, self.pos),
                    Expr::Var(n, ..) => Expr::Var(n, open, self.pos),
                    Expr::Neg(i, ..) => Expr::Neg(i, open, self.pos),
                    Expr::Bin(op, l, r, ..) => Expr::Bin(op, l, r, open, self.pos),
                })
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let s = self.pos;
                while self.pos < self.end && (self.chars[self.pos].is_ascii_digit() || self.chars[self.pos] == '.') {
                    self.pos += 1;
                }
                if self.pos < self.end && matches!(self.chars[self.pos], 'e' | 'E') {
                    let mark = self.pos;
                    self.pos += 1;
                    if self.pos < self.end && matches!(self.chars[self.pos], '+' | '-') {
                        self.pos += 1;
                    }
                    let digits = self.pos;
                    while self.pos < self.end && self.chars[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                    if digits == self.pos {
                        self.pos = mark;
                    }
                }
                let text: String = self.chars[s..self.pos].iter().collect();
                let x: f64 = text.parse().map_err(|_| (alloc::format!("bad number `{text}`"), s))?;
                Ok(Expr::Num(x, s, self.pos))
            }
            Some(_) => match self.ident() {
                Some((name, s, e)) => Ok(Expr::Var(name, s, e)),
                None => Err((
                    alloc::format!("unexpected `{}`", self.chars[self.pos]),
                    start.max(self.pos),
                )),
            },
            None => Err(("expected expression".into(), self.pos)),
        }
    }
}

fn parse_lines(chars: &[char]) -> Result<Vec<Line>, (String, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start <= chars.len() {
        let end = chars[start..]
            .iter()
            .position(|&c| c == '\n')
            .map_or(chars.len(), |i| start + i);
        let mut p = LineParser { chars, pos: start, end };
        if let Some(line) = p.line()? {
            out.push(line);
        }
        start = end + 1;
    }
    Ok(out)
}

fn expression() -> TagSet {
    TagSet::of(&[Tag::Expression])
}

struct Lower<'a> {
    root: &'a mut RootNode,
    source: Option<&'a Rc<Source>>,
}

impl Lower<'_> {
    fn add(&mut self, kind: NodeKind, tags: TagSet, span: (usize, usize)) -> NodeId {
        let node = match self.source {
            Some(src) => Node::new(kind, tags, src.section(span.0, span.1 - span.0).ok()),
            None => Node::new(kind, TagSet::EMPTY, None),
        };
        self.root.add_node(node)
    }

    fn name_const(&mut self, name: &str) -> u32 {
        self.root.consts.push(Value::str(name));
        self.root.consts.len() as u32 - 1
    }

    fn slot(&self, name: &str) -> Option<u32> {
        self.root.slots.iter().position(|s| &*s.name == name).map(|i| i as u32)
    }

    fn expr(&mut self, e: &Expr, extra: TagSet) -> NodeId {
        let mut tags = expression();
        for t in extra.iter() {
            tags.insert(t);
        }
        match e {
            Expr::Num(x, s, end) => self.add(NodeKind::Float(*x), tags, (*s, *end)),
            Expr::Var(name, s, end) => {
                let kind = match self.slot(name) {
                    Some(slot) => NodeKind::Local { slot },
                    None => NodeKind::ByName {
                        name: self.name_const(name),
                    },
                };
                self.add(kind, tags, (*s, *end))
            }
            Expr::Neg(inner, s, end) => {
                let operand = self.expr(inner, TagSet::EMPTY);
                self.add(NodeKind::Unary { op: UnOp::Neg, operand }, tags, (*s, *end))
            }
            Expr::Bin(op, l, r, s, end) => {
                let lhs = self.expr(l, TagSet::EMPTY);
                let rhs = self.expr(r, TagSet::EMPTY);
                self.add(
                    NodeKind::Binary {
                        op: *op,
                        lhs,
                        rhs,
                        spill: crate::node::NO_SLOT,
                    },
                    tags,
                    (*s, *end),
                )
            }
        }
    }

    fn line(&mut self, line: &Line) -> NodeId {
        let stmt = TagSet::of(&[Tag::Statement]);
        match line {
            Line::Assign(name, value, s, e) => {
                let value = self.expr(value, TagSet::EMPTY);
                let kind = match self.slot(name) {
                    Some(slot) => NodeKind::SetLocal { slot, value },
                    None => NodeKind::SetByName {
                        name: self.name_const(name),
                        value,
                    },
                };
                self.add(kind, stmt.with(Tag::Expression), (*s, *e))
            }
            Line::Expr(e) => {
                let expr = self.expr(e, stmt);
                self.root
                    .add_node(Node::new(NodeKind::Echo { expr }, TagSet::EMPTY, None))
            }
        }
    }
}

fn error(message: String, at: usize, source: Option<&Rc<Source>>) -> GuestException {
    match source {
        Some(src) => {
            let at = at.min(src.char_len());
            let len = usize::from(at < src.char_len());
            GuestException::syntax(message, src.section(at, len).expect("clamped"))
        }
        None => GuestException::new(ExceptionKind::Syntax, message, LANGUAGE_ID),
    }
}

impl LanguageFrontend for MiniCalc {
    fn language_id(&self) -> &str {
        LANGUAGE_ID
    }

    fn parse(&self, source: &Rc<Source>, cx: &ParseCx<'_>) -> Result<Vec<RootNode>, GuestException> {
        let chars: Vec<char> = source.text().chars().collect();
        let lines = parse_lines(&chars).map_err(|(m, at)| error(m, at, Some(source)))?;
        let mut root = RootNode::new(cx.first_root, "main", LANGUAGE_ID);
        root.section = source.section(0, source.char_len()).ok();
        for line in &lines {
            if let Line::Assign(name, ..) = line {
                if !root.slots.iter().any(|s| &*s.name == name.as_str()) {
                    root.slots.push(SlotDescriptor {
                        name: Rc::from(name.as_str()),
                        internal: false,
                    });
                }
            }
        }
        let mut lower = Lower {
            root: &mut root,
            source: Some(source),
        };
        let ids: Vec<NodeId> = lines.iter().map(|l| lower.line(l)).collect();
        let list = lower.root.add_list(&ids);
        let body = lower.add(
            NodeKind::Block { stmts: list },
            TagSet::of(&[Tag::Root]),
            (0, source.char_len()),
        );
        root.set_body(body);
        Ok(alloc::vec![root])
    }

    fn to_display_string(&self, value: &Value) -> String {
        display(value)
    }

    fn parse_inline(&self, text: &str, cx: &mut InlineCx<'_>) -> Result<NodeId, GuestException> {
        let chars: Vec<char> = text.chars().collect();
        let lines = parse_lines(&chars).map_err(|(m, at)| error(m, at, None))?;
        let [line] = lines.as_slice() else {
            return Err(error("inline code must be a single line".into(), 0, None));
        };
        let mut lower = Lower {
            root: cx.root,
            source: None,
        };
        let body = match line {
            Line::Expr(e) => lower.expr(e, TagSet::EMPTY),
            assign => lower.line(assign),
        };
        Ok(cx.root.add_fragment_holder(body))
    }
}
