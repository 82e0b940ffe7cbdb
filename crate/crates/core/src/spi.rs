//! The contract a guest language implements so that instruments and tools
//! work on it unchanged.

use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::exception::{ExceptionKind, GuestException, RawError};
use crate::frame::{Frame, Scope, ScopeVariable};
use crate::node::{NodeId, NodeKind, RootId, RootNode, Tag};
use crate::source::{Source, SourceSection};
use crate::value::Value;

/// Context for parsing a whole source.
pub struct ParseCx<'a> {
    /// Id the first returned root must take; further roots count up from it.
    pub first_root: RootId,
    /// Names of engine builtins, by builtin table index.
    pub builtins: &'a [Rc<str>],
}

/// Context for translating a fragment at an existing program location.
pub struct InlineCx<'a> {
    /// Root that receives the fragment's nodes.
    pub root: &'a mut RootNode,
    /// Location the fragment is evaluated at.
    pub node: NodeId,
    /// Slot names of the lexically enclosing roots, innermost first (the
    /// target root itself is not included).
    pub enclosing: Vec<Vec<Rc<str>>>,
    pub builtins: &'a [Rc<str>],
}

pub trait LanguageFrontend {
    fn language_id(&self) -> &str;

    /// Parses a source into roots; the first one is the top-level program.
    /// Every statement, call, expression and root body node must carry its
    /// tags and a section.
    fn parse(&self, source: &Rc<Source>, cx: &ParseCx<'_>) -> Result<Vec<RootNode>, GuestException>;

    fn is_tagged_with(&self, root: &RootNode, node: NodeId, tag: Tag) -> bool {
        root.node(node).tags.contains(tag)
    }

    fn to_display_string(&self, value: &Value) -> String;

    /// Translates `text` into a detached fragment inside `cx.root`, resolving
    /// identifiers in the lexical context of `cx.node`. Returns the fragment
    /// holder.
    fn parse_inline(&self, text: &str, cx: &mut InlineCx<'_>) -> Result<NodeId, GuestException>;

    /// Child indices whose values feed the computation of `node`, in
    /// evaluation order.
    fn declare_expression_inputs(&self, root: &RootNode, node: NodeId) -> Vec<usize> {
        expression_inputs(root, node)
    }

    fn wrap_exception(&self, raw: RawError, location: Option<SourceSection>) -> GuestException {
        default_wrap(self.language_id(), raw, location)
    }

    /// Flags internal elements after parsing: roots of internal sources and
    /// compiler temporaries.
    fn mark_internal(&self, root: &mut RootNode) {
        if let Some(section) = &root.section {
            root.internal = section.source().is_internal();
        }
        for slot in &mut root.slots {
            if slot.name.starts_with('$') {
                slot.internal = true;
            }
        }
    }

    /// Scopes visible at `node` in `frame`, innermost first.
    fn find_local_scopes(
        &self,
        root: &RootNode,
        _node: NodeId,
        frame: &Frame,
        include_internal: bool,
    ) -> Result<Vec<Scope>> {
        Ok(alloc::vec![frame_scope(root, frame, include_internal, &root.name)?])
    }
}

/// Scope listing the slots of `frame`.
pub fn frame_scope(root: &RootNode, frame: &Frame, include_internal: bool, name: &str) -> Result<Scope> {
    if frame.root() != root.id || frame.slot_count() != root.slots.len() {
        return Err(Error::Scope(alloc::format!(
            "frame of root {} does not belong to root {}",
            frame.root().0,
            root.id.0
        )));
    }
    let variables = root
        .slots
        .iter()
        .enumerate()
        .filter(|(_, d)| include_internal || !d.internal)
        .map(|(i, d)| ScopeVariable {
            name: String::from(&*d.name),
            value: frame.get(i),
            writable: true,
            internal: d.internal,
        })
        .collect();
    Ok(Scope {
        name: name.into(),
        variables,
    })
}

/// Input children of the shared node kinds.
pub fn expression_inputs(root: &RootNode, node: NodeId) -> Vec<usize> {
    match root.node(node).kind {
        NodeKind::Binary { .. } | NodeKind::And { .. } | NodeKind::Or { .. } => alloc::vec![0, 1],
        NodeKind::Unary { .. } => alloc::vec![0],
        NodeKind::Call { args, .. } => (0..=args.len as usize).collect(),
        NodeKind::SetLocal { .. } | NodeKind::SetOuter { .. } | NodeKind::SetByName { .. } => {
            alloc::vec![0]
        }
        _ => Vec::new(),
    }
}

pub fn default_wrap(language_id: &str, raw: RawError, location: Option<SourceSection>) -> GuestException {
    use alloc::format;
    let (kind, message, exit_code) = match raw {
        RawError::DivisionByZero => (ExceptionKind::Runtime, "division by zero".into(), None),
        RawError::UndefinedVariable(name) => (ExceptionKind::Runtime, format!("undefined variable `{name}`"), None),
        RawError::Type(msg) => (ExceptionKind::Runtime, msg, None),
        RawError::Arity { name, expected, got } => (
            ExceptionKind::Runtime,
            format!("`{name}` expects {expected} argument(s), got {got}"),
            None,
        ),
        RawError::NotCallable(ty) => (ExceptionKind::Runtime, format!("{ty} value is not callable"), None),
        RawError::Overflow => (ExceptionKind::Runtime, "integer overflow".into(), None),
        RawError::StackOverflow => (ExceptionKind::Runtime, "stack overflow".into(), None),
        RawError::Exit(code) => (ExceptionKind::Exit, format!("exit({code})"), Some(code)),
        RawError::Cancelled(reason) => (ExceptionKind::Cancelled, format!("cancelled: {reason}"), None),
        RawError::Internal(msg) => (ExceptionKind::Internal, msg, None),
    };
    let mut e = GuestException::new(kind, message, language_id).with_location(location);
    e.exit_code = exit_code;
    e
}
