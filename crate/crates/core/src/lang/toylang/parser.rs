use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use super::lexer::{lex, Tok, Token};
use super::syntax::{Expr, Program, Span, Stmt, StmtKind};
use crate::node::{BinOp, UnOp};

#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    pub message: String,
    pub span: Span,
}

type PResult<T> = Result<T, ParseError>;

pub fn parse_program(text: &str) -> PResult<Program> {
    let chars: Vec<char> = text.chars().collect();
    let tokens = lex(&chars).map_err(|e| ParseError {
        message: e.message,
        span: e.span,
    })?;
    let mut p = Parser { tokens, pos: 0 };
    let stmts = p.statements(true)?;
    Ok(Program { stmts })
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.bump();
            true
        } else {
            false
        }
    }

    fn unexpected<T>(&self, expected: &str) -> PResult<T> {
        Err(ParseError {
            message: alloc::format!("expected {expected}, found {}", self.peek().describe()),
            span: self.span(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> PResult<Span> {
        if *self.peek() == tok {
            Ok(self.bump().span)
        } else {
            self.unexpected(what)
        }
    }

    fn skip_newlines(&mut self) {
        while *self.peek() == Tok::Newline {
            self.bump();
        }
    }

    fn skip_separators(&mut self) {
        while matches!(self.peek(), Tok::Newline | Tok::Semi) {
            self.bump();
        }
    }

    /// Statement list up to end of input (`top`) or a closing brace.
    fn statements(&mut self, top: bool) -> PResult<Vec<Stmt>> {
        let mut out = Vec::new();
        self.skip_separators();
        loop {
            match self.peek() {
                Tok::Eof if top => break,
                Tok::RBrace if !top => break,
                Tok::Eof => return self.unexpected("`}`"),
                _ => {}
            }
            let stmt = self.statement()?;
            let ends_with_block = matches!(
                stmt.kind,
                StmtKind::FnDecl { .. } | StmtKind::If { .. } | StmtKind::While { .. }
            );
            out.push(stmt);
            match self.peek() {
                Tok::Newline | Tok::Semi => self.skip_separators(),
                Tok::Eof | Tok::RBrace => {}
                _ if ends_with_block => {}
                _ => return self.unexpected("end of statement"),
            }
        }
        Ok(out)
    }

    fn block(&mut self) -> PResult<(Vec<Stmt>, Span)> {
        let open = self.expect(Tok::LBrace, "`{`")?;
        let stmts = self.statements(false)?;
        let close = self.expect(Tok::RBrace, "`}`")?;
        Ok((stmts, open.to(close)))
    }

    fn statement(&mut self) -> PResult<Stmt> {
        let start = self.span();
        match self.peek().clone() {
            Tok::Fn => {
                self.bump();
                let name = match self.bump().tok {
                    Tok::Ident(n) => n,
                    _ => {
                        self.pos -= 1;
                        return self.unexpected("function name");
                    }
                };
                self.expect(Tok::LParen, "`(`")?;
                let mut params = Vec::new();
                if *self.peek() != Tok::RParen {
                    loop {
                        match self.peek().clone() {
                            Tok::Ident(p) => {
                                if params.contains(&p) {
                                    return Err(ParseError {
                                        message: alloc::format!("duplicate parameter `{p}`"),
                                        span: self.span(),
                                    });
                                }
                                self.bump();
                                params.push(p);
                            }
                            _ => return self.unexpected("parameter name"),
                        }
                        if !self.eat(&Tok::Comma) {
                            break;
                        }
                    }
                }
                self.expect(Tok::RParen, "`)`")?;
                let (body, body_span) = self.block()?;
                Ok(Stmt {
                    kind: StmtKind::FnDecl { name, params, body },
                    span: start.to(body_span),
                })
            }
            Tok::If => self.if_statement(),
            Tok::While => {
                self.bump();
                let cond = self.expr()?;
                let (body, span) = self.block()?;
                Ok(Stmt {
                    kind: StmtKind::While { cond, body },
                    span: start.to(span),
                })
            }
            Tok::Return => {
                self.bump();
                if matches!(self.peek(), Tok::Newline | Tok::Semi | Tok::RBrace | Tok::Eof) {
                    return Ok(Stmt {
                        kind: StmtKind::Return(None),
                        span: start,
                    });
                }
                let value = self.expr()?;
                let span = start.to(value.span());
                Ok(Stmt {
                    kind: StmtKind::Return(Some(value)),
                    span,
                })
            }
            Tok::Ident(name) if self.tokens[self.pos + 1].tok == Tok::Assign => {
                self.bump();
                self.bump();
                self.skip_newlines();
                let value = self.expr()?;
                let span = start.to(value.span());
                Ok(Stmt {
                    kind: StmtKind::Assign { name, value },
                    span,
                })
            }
            _ => {
                let e = self.expr()?;
                if *self.peek() == Tok::Assign {
                    return Err(ParseError {
                        message: "invalid assignment target".into(),
                        span: e.span(),
                    });
                }
                let span = e.span();
                Ok(Stmt {
                    kind: StmtKind::Expr(e),
                    span,
                })
            }
        }
    }

    fn if_statement(&mut self) -> PResult<Stmt> {
        let start = self.expect(Tok::If, "`if`")?;
        let cond = self.expr()?;
        let (then_branch, then_span) = self.block()?;
        let mut end = then_span;
        let save = self.pos;
        self.skip_newlines();
        let else_branch = if self.eat(&Tok::Else) {
            if *self.peek() == Tok::If {
                let nested = self.if_statement()?;
                end = nested.span;
                Some(alloc::vec![nested])
            } else {
                let (stmts, span) = self.block()?;
                end = span;
                Some(stmts)
            }
        } else {
            self.pos = save;
            None
        };
        Ok(Stmt {
            kind: StmtKind::If {
                cond,
                then_branch,
                else_branch,
            },
            span: start.to(end),
        })
    }

    pub(crate) fn expr(&mut self) -> PResult<Expr> {
        self.or()
    }

    fn or(&mut self) -> PResult<Expr> {
        let mut lhs = self.and()?;
        while *self.peek() == Tok::OrOr {
            self.bump();
            self.skip_newlines();
            let rhs = self.and()?;
            let span = lhs.span().to(rhs.span());
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs), span);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> PResult<Expr> {
        let mut lhs = self.binary(0)?;
        while *self.peek() == Tok::AndAnd {
            self.bump();
            self.skip_newlines();
            let rhs = self.binary(0)?;
            let span = lhs.span().to(rhs.span());
            lhs = Expr::And(Box::new(lhs), Box::new(rhs), span);
        }
        Ok(lhs)
    }

    /// Left-associative binary levels: equality, comparison, additive,
    /// multiplicative.
    fn binary(&mut self, level: usize) -> PResult<Expr> {
        if level == 4 {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        loop {
            let op = match (level, self.peek()) {
                (0, Tok::EqEq) => BinOp::Eq,
                (0, Tok::NotEq) => BinOp::Ne,
                (1, Tok::Lt) => BinOp::Lt,
                (1, Tok::Le) => BinOp::Le,
                (1, Tok::Gt) => BinOp::Gt,
                (1, Tok::Ge) => BinOp::Ge,
                (2, Tok::Plus) => BinOp::Add,
                (2, Tok::Minus) => BinOp::Sub,
                (3, Tok::Star) => BinOp::Mul,
                (3, Tok::Slash) => BinOp::Div,
                (3, Tok::Percent) => BinOp::Rem,
                _ => break,
            };
            self.bump();
            self.skip_newlines();
            let rhs = self.binary(level + 1)?;
            let span = lhs.span().to(rhs.span());
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                span,
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let op = match self.peek() {
            Tok::Minus => UnOp::Neg,
            Tok::Bang => UnOp::Not,
            _ => return self.call(),
        };
        let start = self.bump().span;
        let operand = self.unary()?;
        let span = start.to(operand.span());
        Ok(Expr::Unary {
            op,
            operand: Box::new(operand),
            span,
        })
    }

    fn call(&mut self) -> PResult<Expr> {
        let mut e = self.primary()?;
        while *self.peek() == Tok::LParen {
            self.bump();
            let mut args = Vec::new();
            if *self.peek() != Tok::RParen {
                loop {
                    args.push(self.expr()?);
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
            }
            let close = self.expect(Tok::RParen, "`)`")?;
            let span = e.span().to(close);
            e = Expr::Call {
                callee: Box::new(e),
                args,
                span,
            };
        }
        Ok(e)
    }

    fn primary(&mut self) -> PResult<Expr> {
        let span = self.span();
        let e = match self.peek().clone() {
            Tok::Int(i) => Expr::Int(i, span),
            Tok::Float(x) => Expr::Float(x, span),
            Tok::Str(s) => Expr::Str(s, span),
            Tok::True => Expr::Bool(true, span),
            Tok::False => Expr::Bool(false, span),
            Tok::Null => Expr::Null(span),
            Tok::Ident(name) => Expr::Var(name, span),
            Tok::LParen => {
                self.bump();
                let mut inner = self.expr()?;
                let close = self.expect(Tok::RParen, "`)`")?;
                inner.set_span(span.to(close));
                return Ok(inner);
            }
            _ => return self.unexpected("expression"),
        };
        self.bump();
        Ok(e)
    }
}
