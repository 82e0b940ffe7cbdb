//! toylang: a small dynamically typed language with functions and closures.
//! The grammar and tagging table live in `docs/toylang.md`.

mod lexer;
mod lower;
mod parser;
pub mod syntax;

use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;

pub use lower::{assigned_names, LANGUAGE_ID, MAIN_NAME};
pub use parser::{parse_program, ParseError};

use crate::exception::{ExceptionKind, GuestException};
use crate::node::{NodeId, NodeKind, RootNode};
use crate::source::Source;
use crate::spi::{InlineCx, LanguageFrontend, ParseCx};
use crate::value::{float_with_point, Function, Value};
use syntax::StmtKind;

#[derive(Clone, Copy, Debug, Default)]
pub struct Toylang;

/// toylang rendering of a value.
pub fn display(value: &Value) -> String {
    match value {
        Value::Int(i) => alloc::format!("{i}"),
        Value::Float(x) => float_with_point(*x),
        Value::Bool(b) => alloc::format!("{b}"),
        Value::Str(s) => String::from(&**s),
        Value::Null => "null".into(),
        Value::Function(f) => match &**f {
            Function::Closure { name, .. } => alloc::format!("<fn {name}>"),
            Function::Native(n) => alloc::format!("<fn {}>", n.name()),
        },
        Value::Undefined => "undefined".into(),
    }
}

fn syntax_error(source: &Rc<Source>, e: ParseError) -> GuestException {
    let start = (e.span.start as usize).min(source.char_len());
    let len = (e.span.len as usize).min(source.char_len() - start);
    let section = source.section(start, len).expect("clamped section is valid");
    GuestException::syntax(e.message, section)
}

impl LanguageFrontend for Toylang {
    fn language_id(&self) -> &str {
        LANGUAGE_ID
    }

    fn parse(&self, source: &Rc<Source>, cx: &ParseCx<'_>) -> Result<Vec<RootNode>, GuestException> {
        let program = parse_program(source.text()).map_err(|e| syntax_error(source, e))?;
        let mut lcx = lower::Ctx {
            source: Some(source),
            builtins: cx.builtins,
            first: cx.first_root,
            roots: Vec::new(),
        };
        Ok(lower::lower_program(&program.stmts, &mut lcx))
    }

    fn to_display_string(&self, value: &Value) -> String {
        display(value)
    }

    fn parse_inline(&self, text: &str, cx: &mut InlineCx<'_>) -> Result<NodeId, GuestException> {
        let program =
            parse_program(text).map_err(|e| GuestException::new(ExceptionKind::Syntax, e.message, LANGUAGE_ID))?;
        if program.stmts.iter().any(|s| matches!(s.kind, StmtKind::FnDecl { .. })) {
            return Err(GuestException::new(
                ExceptionKind::Syntax,
                "function declarations are not allowed in inline code",
                LANGUAGE_ID,
            ));
        }
        let mut lcx = lower::Ctx {
            source: None,
            builtins: cx.builtins,
            first: cx.root.id,
            roots: Vec::new(),
        };
        let mut b = lower::Builder::new(cx.root, cx.enclosing.clone(), true);
        let body = match program.stmts.as_slice() {
            [single] => {
                let id = b.stmt(single, &mut lcx);
                match b.root.node(id).kind {
                    // a lone expression yields its value directly
                    NodeKind::ExprStmt { expr } => {
                        b.root.node_mut(expr).parent = None;
                        expr
                    }
                    _ => id,
                }
            }
            stmts => b.block(stmts, &mut lcx, None, false),
        };
        Ok(b.root.add_fragment_holder(body))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node::Tag;

    #[test]
    fn display_conventions() {
        assert_eq!(display(&Value::Int(3)), "3");
        assert_eq!(display(&Value::Float(1.0)), "1.0");
        assert_eq!(display(&Value::Float(0.25)), "0.25");
        assert_eq!(display(&Value::Null), "null");
        assert_eq!(display(&Value::str("hi")), "hi");
    }

    fn parse(text: &str) -> Vec<RootNode> {
        let src = Source::new("t.toy", "toylang", text, false).unwrap();
        Toylang
            .parse(
                &src,
                &ParseCx {
                    first_root: crate::node::RootId(0),
                    builtins: &[],
                },
            )
            .unwrap()
    }

    fn tagged(root: &RootNode, tag: Tag) -> Vec<(usize, String)> {
        root.program_nodes()
            .into_iter()
            .filter(|&n| root.node(n).tags.contains(tag))
            .map(|n| {
                let s = root.node(n).section.clone().unwrap();
                (s.start_line(), String::from(s.text()))
            })
            .collect()
    }

    #[test]
    fn statements_tagged_per_line() {
        let roots = parse("x = 1\ny = 2");
        assert_eq!(
            tagged(&roots[0], Tag::Statement),
            [(1, "x = 1".into()), (2, "y = 2".into())]
        );
    }

    #[test]
    fn nested_calls_are_nested_sections() {
        let roots = parse("fn g() { return 1 }\nfn f(a) { return a }\nf(g())");
        let calls = tagged(&roots[0], Tag::Call);
        assert_eq!(calls, [(3, "f(g())".into()), (3, "g()".into())]);
    }

    #[test]
    fn function_bodies_are_roots() {
        let roots = parse("fn f(a, b) {\n  c = a + b\n  return c\n}");
        assert_eq!(roots.len(), 2);
        let f = &roots[1];
        assert_eq!(&*f.name, "f");
        assert_eq!(f.arity, 2);
        assert!(f.node(f.body()).tags.contains(Tag::Root));
        let names: Vec<&str> = f.slots.iter().map(|s| &*s.name).collect();
        assert_eq!(names, ["a", "b", "c"]);
    }

    #[test]
    fn calls_in_right_operand_spill_left() {
        let roots = parse("fn f(x) { return x }\na = f(1) + f(2)");
        let slots: Vec<(&str, bool)> = roots[0].slots.iter().map(|s| (&*s.name, s.internal)).collect();
        assert_eq!(slots, [("f", false), ("a", false), ("$tmp0", true)]);
    }

    #[test]
    fn outer_writes_do_not_shadow() {
        let roots = parse("n = 0\nfn inc() { n = n + 1 }");
        assert!(roots[1].slots.is_empty());
    }
}
