//! The executable tree: arena-allocated nodes per root, syntactic tags,
//! specialization state and root assumptions.
//!
//! Children are addressed by [`NodeId`] inside their root's arena. Replacing a
//! node allocates a new arena entry and redirects the parent's child slot, so
//! ids of detached nodes stay valid (they just become unreachable).

use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;
use core::cell::Cell;
use core::fmt;

use crate::error::{Error, Result};
use crate::instrument::Probe;
use crate::source::SourceSection;
use crate::value::Value;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct NodeId(pub u32);

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct RootId(pub u32);

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ProbeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RootId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Maximum number of node replacements a single location may go through.
pub const REWRITE_LIMIT: u8 = 3;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub enum Tag {
    Statement,
    Call,
    Expression,
    Root,
}

impl Tag {
    pub const ALL: [Tag; 4] = [Tag::Statement, Tag::Call, Tag::Expression, Tag::Root];

    /// Stable wire name.
    pub fn name(self) -> &'static str {
        match self {
            Tag::Statement => "STATEMENT",
            Tag::Call => "CALL",
            Tag::Expression => "EXPRESSION",
            Tag::Root => "ROOT",
        }
    }

    pub fn from_name(name: &str) -> Option<Tag> {
        Tag::ALL.into_iter().find(|t| t.name().eq_ignore_ascii_case(name))
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TagSet(u8);

impl TagSet {
    pub const EMPTY: TagSet = TagSet(0);

    pub fn of(tags: &[Tag]) -> TagSet {
        let mut set = TagSet::EMPTY;
        for &t in tags {
            set.insert(t);
        }
        set
    }

    pub fn insert(&mut self, tag: Tag) {
        self.0 |= tag.bit();
    }

    pub fn with(mut self, tag: Tag) -> TagSet {
        self.insert(tag);
        self
    }

    pub fn contains(self, tag: Tag) -> bool {
        self.0 & tag.bit() != 0
    }

    pub fn intersects(self, other: TagSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Tag> {
        Tag::ALL.into_iter().filter(move |t| self.contains(*t))
    }
}

impl fmt::Debug for TagSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(Tag::name)).finish()
    }
}

/// Operand class a specialized node was rewritten for.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum Variant {
    Int,
    Float,
    Str,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Hash)]
pub enum Tier {
    Uninitialized,
    Specialized(Variant),
    Generic,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct NodeState {
    pub tier: Tier,
    pub rewrite_count: u8,
}

impl NodeState {
    pub const UNINITIALIZED: NodeState = NodeState {
        tier: Tier::Uninitialized,
        rewrite_count: 0,
    };
    /// State of node kinds that never specialize.
    pub const FIXED: NodeState = NodeState {
        tier: Tier::Generic,
        rewrite_count: 0,
    };
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    /// Division that raises on a zero divisor.
    Div,
    /// IEEE float division (zero divisor yields infinity / NaN).
    DivIeee,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div | BinOp::DivIeee => "/",
            BinOp::Rem => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
        }
    }

    /// Whether the operator has type-specialized variants.
    pub fn specializes(self) -> bool {
        !matches!(self, BinOp::Eq | BinOp::Ne)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum UnOp {
    Neg,
    Not,
}

/// A run of child ids stored in [`RootNode::lists`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct ListRef {
    pub start: u32,
    pub len: u32,
}

pub const NO_SLOT: u32 = u32::MAX;

/// Node opcodes. `Copy` so the evaluator can read a node without holding a
/// borrow of the arena.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum NodeKind {
    /// Anchor owning a root body or an injected fragment.
    Holder {
        body: NodeId,
    },
    Block {
        stmts: ListRef,
    },
    Int(i64),
    Float(f64),
    Bool(bool),
    Null,
    /// String constant by index into [`RootNode::consts`].
    Str(u32),
    Local {
        slot: u32,
    },
    Outer {
        depth: u32,
        slot: u32,
    },
    /// Entry of the engine builtin table.
    Builtin {
        index: u32,
    },
    /// Identifier resolved by name at run time.
    ByName {
        name: u32,
    },
    SetLocal {
        slot: u32,
        value: NodeId,
    },
    SetOuter {
        depth: u32,
        slot: u32,
        value: NodeId,
    },
    SetByName {
        name: u32,
        value: NodeId,
    },
    /// `spill` names an internal slot receiving the left operand before the
    /// right one is evaluated, or [`NO_SLOT`].
    Binary {
        op: BinOp,
        lhs: NodeId,
        rhs: NodeId,
        spill: u32,
    },
    Unary {
        op: UnOp,
        operand: NodeId,
    },
    And {
        lhs: NodeId,
        rhs: NodeId,
    },
    Or {
        lhs: NodeId,
        rhs: NodeId,
    },
    Call {
        callee: NodeId,
        args: ListRef,
    },
    Closure {
        root: RootId,
    },
    If {
        cond: NodeId,
        then_branch: NodeId,
        else_branch: Option<NodeId>,
    },
    While {
        cond: NodeId,
        body: NodeId,
    },
    Return {
        value: Option<NodeId>,
    },
    ExprStmt {
        expr: NodeId,
    },
    /// Evaluates `expr` and prints its display string (calculator lines).
    Echo {
        expr: NodeId,
    },
    /// Instrumentation proxy in front of a probed node.
    Wrapper {
        delegate: NodeId,
        probe: ProbeId,
    },
    /// Reports the value of an expression input to the probe of its parent.
    InputTap {
        delegate: NodeId,
        probe: ProbeId,
        index: u32,
    },
}

impl NodeKind {
    pub fn is_instrumentation(&self) -> bool {
        matches!(self, NodeKind::Wrapper { .. } | NodeKind::InputTap { .. })
    }
}

#[derive(Clone, Debug)]
pub struct Node {
    pub kind: NodeKind,
    pub state: NodeState,
    pub tags: TagSet,
    pub section: Option<SourceSection>,
    pub parent: Option<NodeId>,
}

impl Node {
    pub fn new(kind: NodeKind, tags: TagSet, section: Option<SourceSection>) -> Node {
        let state = match kind {
            NodeKind::Binary { op, .. } if op.specializes() => NodeState::UNINITIALIZED,
            NodeKind::Unary { op: UnOp::Neg, .. } => NodeState::UNINITIALIZED,
            _ => NodeState::FIXED,
        };
        Node {
            kind,
            state,
            tags,
            section,
            parent: None,
        }
    }

    /// Instrumentable nodes carry at least one tag and a section.
    pub fn is_instrumentable(&self) -> bool {
        !self.tags.is_empty() && self.section.is_some() && !self.kind.is_instrumentation()
    }
}

/// Validity token for everything cached against a root's tree shape.
/// Transitions only from valid to invalid.
pub struct Assumption {
    valid: Cell<bool>,
    label: String,
}

impl Assumption {
    pub fn new(label: &str) -> Rc<Assumption> {
        Rc::new(Assumption {
            valid: Cell::new(true),
            label: label.into(),
        })
    }

    pub fn is_valid(&self) -> bool {
        self.valid.get()
    }

    /// Idempotent.
    pub fn invalidate(&self) {
        self.valid.set(false);
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Assumption({}, valid={})", self.label, self.is_valid())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotDescriptor {
    pub name: Rc<str>,
    pub internal: bool,
}

/// One executable unit (function body or top-level program) with its node
/// arena and instrumentation overlay.
pub struct RootNode {
    pub id: RootId,
    pub name: Rc<str>,
    pub language_id: Rc<str>,
    pub section: Option<SourceSection>,
    /// False means descendant sections may lie outside `section`, so root-level
    /// filter checks must not prune this root.
    pub sections_nested: bool,
    pub internal: bool,
    pub arity: usize,
    /// Root whose frame closures of this root capture.
    pub lexical_parent: Option<RootId>,
    pub slots: Vec<SlotDescriptor>,
    pub nodes: Vec<Node>,
    pub lists: Vec<NodeId>,
    pub consts: Vec<Value>,
    pub holder: NodeId,
    pub(crate) assumption: Rc<Assumption>,
    pub(crate) probes: Vec<Probe>,
}

impl RootNode {
    /// An empty root whose holder is node 0; the body is attached with
    /// [`RootNode::set_body`].
    pub fn new(id: RootId, name: &str, language_id: &str) -> RootNode {
        let mut root = RootNode {
            id,
            name: Rc::from(name),
            language_id: Rc::from(language_id),
            section: None,
            sections_nested: true,
            internal: false,
            arity: 0,
            lexical_parent: None,
            slots: Vec::new(),
            nodes: Vec::new(),
            lists: Vec::new(),
            consts: Vec::new(),
            holder: NodeId(0),
            assumption: Assumption::new(name),
            probes: Vec::new(),
        };
        root.holder = root.add_node(Node::new(
            NodeKind::Holder { body: NodeId(u32::MAX) },
            TagSet::EMPTY,
            None,
        ));
        root
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut Node {
        &mut self.nodes[id.index()]
    }

    pub fn list(&self, list: ListRef) -> &[NodeId] {
        &self.lists[list.start as usize..(list.start + list.len) as usize]
    }

    pub fn add_list(&mut self, ids: &[NodeId]) -> ListRef {
        let start = self.lists.len() as u32;
        self.lists.extend_from_slice(ids);
        ListRef {
            start,
            len: ids.len() as u32,
        }
    }

    /// Allocates a detached node and adopts its children.
    pub fn add_node(&mut self, node: Node) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(node);
        for child in self.children(id) {
            self.nodes[child.index()].parent = Some(id);
        }
        id
    }

    pub fn set_body(&mut self, body: NodeId) {
        self.nodes[self.holder.index()].kind = NodeKind::Holder { body };
        self.nodes[body.index()].parent = Some(self.holder);
    }

    /// Allocates a holder for an injected fragment, so every executable node
    /// of the fragment has a parent.
    pub fn add_fragment_holder(&mut self, body: NodeId) -> NodeId {
        self.add_node(Node::new(NodeKind::Holder { body }, TagSet::EMPTY, None))
    }

    pub fn body(&self) -> NodeId {
        match self.nodes[self.holder.index()].kind {
            NodeKind::Holder { body } => body,
            _ => unreachable!("root holder replaced"),
        }
    }

    pub fn assumption(&self) -> &Rc<Assumption> {
        &self.assumption
    }

    /// The current assumption, replacing an invalidated one with a fresh token.
    pub fn current_assumption(&mut self) -> Rc<Assumption> {
        if !self.assumption.is_valid() {
            self.assumption = Assumption::new(&self.name);
        }
        self.assumption.clone()
    }

    /// Invalidates the current assumption and installs a fresh one.
    pub fn invalidate_assumption(&mut self) {
        self.assumption.invalidate();
        self.assumption = Assumption::new(&self.name);
    }

    /// Ordered children of a node.
    pub fn children(&self, id: NodeId) -> Vec<NodeId> {
        use NodeKind::*;
        let mut out = Vec::new();
        match self.nodes[id.index()].kind {
            Holder { body } => {
                if body.0 != u32::MAX {
                    out.push(body)
                }
            }
            Block { stmts } => out.extend_from_slice(self.list(stmts)),
            Int(_)
            | Float(_)
            | Bool(_)
            | Null
            | Str(_)
            | Local { .. }
            | Outer { .. }
            | Builtin { .. }
            | ByName { .. }
            | Closure { .. } => {}
            SetLocal { value, .. } | SetOuter { value, .. } | SetByName { value, .. } => out.push(value),
            Binary { lhs, rhs, .. } | And { lhs, rhs } | Or { lhs, rhs } => {
                out.push(lhs);
                out.push(rhs);
            }
            Unary { operand, .. } => out.push(operand),
            Call { callee, args } => {
                out.push(callee);
                out.extend_from_slice(self.list(args));
            }
            If {
                cond,
                then_branch,
                else_branch,
            } => {
                out.push(cond);
                out.push(then_branch);
                out.extend(else_branch);
            }
            While { cond, body } => {
                out.push(cond);
                out.push(body);
            }
            Return { value } => out.extend(value),
            ExprStmt { expr } | Echo { expr } => out.push(expr),
            Wrapper { delegate, .. } | InputTap { delegate, .. } => out.push(delegate),
        }
        out
    }

    /// Redirects the child slot of `parent` that holds `old` to `new`.
    pub(crate) fn redirect_child(&mut self, parent: NodeId, old: NodeId, new: NodeId) -> Result<()> {
        use NodeKind::*;
        let swap = |slot: &mut NodeId| {
            if *slot == old {
                *slot = new;
                true
            } else {
                false
            }
        };
        let swap_in_list = |lists: &mut Vec<NodeId>, list: ListRef| {
            let range = list.start as usize..(list.start + list.len) as usize;
            match lists[range.clone()].iter().position(|&c| c == old) {
                Some(pos) => {
                    lists[range.start + pos] = new;
                    true
                }
                None => false,
            }
        };
        let mut kind = self.nodes[parent.index()].kind;
        let done = match &mut kind {
            Holder { body } => swap(body),
            Block { stmts } => swap_in_list(&mut self.lists, *stmts),
            Call { callee, args } => swap(callee) || swap_in_list(&mut self.lists, *args),
            SetLocal { value, .. } | SetOuter { value, .. } | SetByName { value, .. } => swap(value),
            Binary { lhs, rhs, .. } | And { lhs, rhs } | Or { lhs, rhs } => swap(lhs) || swap(rhs),
            Unary { operand, .. } => swap(operand),
            If {
                cond,
                then_branch,
                else_branch,
            } => swap(cond) || swap(then_branch) || else_branch.as_mut().is_some_and(swap),
            While { cond, body } => swap(cond) || swap(body),
            Return { value } => value.as_mut().is_some_and(swap),
            ExprStmt { expr } | Echo { expr } => swap(expr),
            Wrapper { delegate, .. } | InputTap { delegate, .. } => swap(delegate),
            Int(_)
            | Float(_)
            | Bool(_)
            | Null
            | Str(_)
            | Local { .. }
            | Outer { .. }
            | Builtin { .. }
            | ByName { .. }
            | Closure { .. } => false,
        };
        if !done {
            return Err(Error::IllegalRewrite("node is not a child of its recorded parent"));
        }
        self.nodes[parent.index()].kind = kind;
        self.nodes[new.index()].parent = Some(parent);
        self.nodes[old.index()].parent = None;
        Ok(())
    }

    /// Replaces `old` by the detached node `new` in `old`'s parent, moving the
    /// children over, and invalidates the root assumption.
    pub fn replace_node(&mut self, old: NodeId, new: NodeId) -> Result<()> {
        let parent = self.nodes[old.index()]
            .parent
            .ok_or(Error::IllegalRewrite("replaced node is detached"))?;
        if self.nodes[new.index()].parent.is_some() {
            return Err(Error::IllegalRewrite("replacement already has a parent"));
        }
        self.redirect_child(parent, old, new)?;
        for child in self.children(new) {
            self.nodes[child.index()].parent = Some(new);
        }
        if let NodeKind::Wrapper { probe, .. } = self.nodes[parent.index()].kind {
            self.probes[probe.0 as usize].retarget(new);
        }
        self.invalidate_assumption();
        Ok(())
    }

    /// Program nodes reachable from the body in pre-order, looking through
    /// instrumentation nodes.
    pub fn program_nodes(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = alloc::vec![self.body()];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id.index()];
            if !node.kind.is_instrumentation() {
                out.push(id);
            }
            let children = self.children(id);
            stack.extend(children.into_iter().rev());
        }
        out
    }

    /// Number of tree nodes reachable from the body. Wrappers count together
    /// with their probe node (two nodes per probe site).
    pub fn node_count(&self) -> usize {
        let mut count = 0;
        let mut stack = alloc::vec![self.body()];
        while let Some(id) = stack.pop() {
            count += match self.nodes[id.index()].kind {
                NodeKind::Wrapper { .. } => 2,
                _ => 1,
            };
            stack.extend(self.children(id));
        }
        count
    }

    /// Number of wrapper nodes in the live tree.
    pub fn wrapper_count(&self) -> usize {
        let mut count = 0;
        let mut stack = alloc::vec![self.body()];
        while let Some(id) = stack.pop() {
            if matches!(self.nodes[id.index()].kind, NodeKind::Wrapper { .. }) {
                count += 1;
            }
            stack.extend(self.children(id));
        }
        count
    }

    /// The wrapper directly above `id`, if the node is probed.
    pub fn wrapper_of(&self, id: NodeId) -> Option<(NodeId, ProbeId)> {
        let mut parent = self.nodes[id.index()].parent?;
        loop {
            match self.nodes[parent.index()].kind {
                NodeKind::Wrapper { probe, .. } => return Some((parent, probe)),
                // taps belong to the parent expression; look above them
                NodeKind::InputTap { .. } => parent = self.nodes[parent.index()].parent?,
                _ => return None,
            }
        }
    }

    /// Structural fingerprint of the live tree (kinds and nesting), for
    /// restoration checks.
    pub fn shape(&self) -> Vec<(u32, u8)> {
        let mut out = Vec::new();
        let mut stack = alloc::vec![(self.body(), 0u32)];
        while let Some((id, depth)) = stack.pop() {
            let node = &self.nodes[id.index()];
            out.push((depth, kind_code(&node.kind)));
            for c in self.children(id).into_iter().rev() {
                stack.push((c, depth + 1));
            }
        }
        out
    }

    /// Collects `Some(section)` of enclosing nodes for display purposes.
    pub fn section_of(&self, id: NodeId) -> Option<SourceSection> {
        let mut cur = Some(id);
        while let Some(n) = cur {
            let node = &self.nodes[n.index()];
            if let Some(s) = &node.section {
                return Some(s.clone());
            }
            cur = node.parent;
        }
        self.section.clone()
    }
}

impl fmt::Debug for RootNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RootNode")
            .field("id", &self.id)
            .field("name", &self.name)
            .field("language_id", &self.language_id)
            .field("nodes", &self.nodes.len())
            .finish()
    }
}

fn kind_code(kind: &NodeKind) -> u8 {
    use NodeKind::*;
    match kind {
        Holder { .. } => 0,
        Block { .. } => 1,
        Int(_) => 2,
        Float(_) => 3,
        Bool(_) => 4,
        Null => 5,
        Str(_) => 6,
        Local { .. } => 7,
        Outer { .. } => 8,
        Builtin { .. } => 9,
        ByName { .. } => 10,
        SetLocal { .. } => 11,
        SetOuter { .. } => 12,
        SetByName { .. } => 13,
        Binary { .. } => 14,
        Unary { .. } => 15,
        And { .. } => 16,
        Or { .. } => 17,
        Call { .. } => 18,
        Closure { .. } => 19,
        If { .. } => 20,
        While { .. } => 21,
        Return { .. } => 22,
        ExprStmt { .. } => 23,
        Echo { .. } => 24,
        Wrapper { .. } => 25,
        InputTap { .. } => 26,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (RootNode, NodeId, NodeId) {
        let mut root = RootNode::new(RootId(0), "t", "toylang");
        let a = root.add_node(Node::new(NodeKind::Int(1), TagSet::EMPTY, None));
        let b = root.add_node(Node::new(NodeKind::Int(2), TagSet::EMPTY, None));
        let add = root.add_node(Node::new(
            NodeKind::Binary {
                op: BinOp::Add,
                lhs: a,
                rhs: b,
                spill: NO_SLOT,
            },
            TagSet::EMPTY,
            None,
        ));
        let stmt = root.add_node(Node::new(NodeKind::ExprStmt { expr: add }, TagSet::EMPTY, None));
        let list = root.add_list(&[stmt]);
        let block = root.add_node(Node::new(NodeKind::Block { stmts: list }, TagSet::EMPTY, None));
        root.set_body(block);
        (root, add, a)
    }

    #[test]
    fn replace_rewires_parent_and_children() {
        let (mut root, add, a) = tiny();
        let before = root.assumption().clone();
        let mut copy = root.node(add).clone();
        copy.parent = None;
        copy.state.tier = Tier::Specialized(Variant::Int);
        let new = root.add_node(copy);
        root.replace_node(add, new).unwrap();
        assert!(!before.is_valid());
        assert!(root.assumption().is_valid());
        assert_eq!(root.node(a).parent, Some(new));
        assert_eq!(root.node(add).parent, None);
        assert_eq!(root.node_count(), 5);
        // detached node cannot be replaced again
        let other = root.add_node(Node::new(NodeKind::Null, TagSet::EMPTY, None));
        assert!(matches!(root.replace_node(add, other), Err(Error::IllegalRewrite(_))));
    }

    #[test]
    fn assumption_invalidation_is_idempotent() {
        let a = Assumption::new("x");
        assert!(a.is_valid());
        a.invalidate();
        a.invalidate();
        assert!(!a.is_valid());
    }

    #[test]
    fn tag_names_round_trip() {
        for t in Tag::ALL {
            assert_eq!(Tag::from_name(t.name()), Some(t));
        }
        let set = TagSet::of(&[Tag::Statement, Tag::Root]);
        assert!(set.contains(Tag::Root) && !set.contains(Tag::Call));
    }
}
