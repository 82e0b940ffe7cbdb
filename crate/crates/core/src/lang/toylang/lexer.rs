use alloc::string::String;
use alloc::vec::Vec;

use super::syntax::Span;

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Int(i64),
    Float(f64),
    Str(String),
    Ident(String),
    Fn,
    If,
    Else,
    While,
    Return,
    True,
    False,
    Null,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Assign,
    Bang,
    AndAnd,
    OrOr,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Newline,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        use Tok::*;
        let s = match self {
            Int(i) => return alloc::format!("integer `{i}`"),
            Float(x) => return alloc::format!("float `{x}`"),
            Str(_) => "string literal",
            Ident(name) => return alloc::format!("identifier `{name}`"),
            Fn => "`fn`",
            If => "`if`",
            Else => "`else`",
            While => "`while`",
            Return => "`return`",
            True => "`true`",
            False => "`false`",
            Null => "`null`",
            Plus => "`+`",
            Minus => "`-`",
            Star => "`*`",
            Slash => "`/`",
            Percent => "`%`",
            EqEq => "`==`",
            NotEq => "`!=`",
            Lt => "`<`",
            Le => "`<=`",
            Gt => "`>`",
            Ge => "`>=`",
            Assign => "`=`",
            Bang => "`!`",
            AndAnd => "`&&`",
            OrOr => "`||`",
            LParen => "`(`",
            RParen => "`)`",
            LBrace => "`{`",
            RBrace => "`}`",
            Comma => "`,`",
            Semi => "`;`",
            Newline => "end of line",
            Eof => "end of input",
        };
        s.into()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

#[derive(Debug, PartialEq)]
pub struct LexError {
    pub message: String,
    pub span: Span,
}

/// Tokenizes toylang text. Newlines inside parentheses are dropped.
pub fn lex(chars: &[char]) -> Result<Vec<Token>, LexError> {
    let mut out = Vec::new();
    let mut i = 0usize;
    let mut parens = 0usize;
    let err = |message: String, start: usize, len: usize| LexError {
        message,
        span: Span::new(start, len),
    };
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        if c == '\n' {
            if parens == 0 {
                out.push(Token {
                    tok: Tok::Newline,
                    span: Span::new(i, 1),
                });
            }
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_digit() {
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut is_float = false;
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                is_float = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let text: String = chars[start..i].iter().collect();
            let tok = if is_float {
                Tok::Float(
                    text.parse()
                        .map_err(|_| err(alloc::format!("bad float `{text}`"), start, i - start))?,
                )
            } else {
                Tok::Int(
                    text.parse()
                        .map_err(|_| err(alloc::format!("integer `{text}` out of range"), start, i - start))?,
                )
            };
            out.push(Token {
                tok,
                span: Span::new(start, i - start),
            });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let tok = match word.as_str() {
                "fn" => Tok::Fn,
                "if" => Tok::If,
                "else" => Tok::Else,
                "while" => Tok::While,
                "return" => Tok::Return,
                "true" => Tok::True,
                "false" => Tok::False,
                "null" => Tok::Null,
                _ => Tok::Ident(word),
            };
            out.push(Token {
                tok,
                span: Span::new(start, i - start),
            });
            continue;
        }
        if c == '"' {
            i += 1;
            let mut text = String::new();
            loop {
                match chars.get(i) {
                    None | Some('\n') => {
                        return Err(err("unterminated string literal".into(), start, i - start));
                    }
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some('\\') => {
                        let escaped = match chars.get(i + 1) {
                            Some('n') => '\n',
                            Some('t') => '\t',
                            Some('"') => '"',
                            Some('\\') => '\\',
                            _ => return Err(err("unknown escape sequence".into(), i, 2.min(chars.len() - i))),
                        };
                        text.push(escaped);
                        i += 2;
                    }
                    Some(&ch) => {
                        text.push(ch);
                        i += 1;
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(text),
                span: Span::new(start, i - start),
            });
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, len) = match (c, next) {
            ('=', Some('=')) => (Tok::EqEq, 2),
            ('!', Some('=')) => (Tok::NotEq, 2),
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('&', Some('&')) => (Tok::AndAnd, 2),
            ('|', Some('|')) => (Tok::OrOr, 2),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            ('/', _) => (Tok::Slash, 1),
            ('%', _) => (Tok::Percent, 1),
            ('<', _) => (Tok::Lt, 1),
            ('>', _) => (Tok::Gt, 1),
            ('=', _) => (Tok::Assign, 1),
            ('!', _) => (Tok::Bang, 1),
            ('(', _) => {
                parens += 1;
                (Tok::LParen, 1)
            }
            (')', _) => {
                parens = parens.saturating_sub(1);
                (Tok::RParen, 1)
            }
            ('{', _) => (Tok::LBrace, 1),
            ('}', _) => (Tok::RBrace, 1),
            (',', _) => (Tok::Comma, 1),
            (';', _) => (Tok::Semi, 1),
            _ => return Err(err(alloc::format!("unexpected character `{c}`"), start, 1)),
        };
        out.push(Token {
            tok,
            span: Span::new(start, len),
        });
        i += len;
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span::new(chars.len(), 0),
    });
    Ok(out)
}
