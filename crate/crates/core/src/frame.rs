use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::fmt;

use crate::node::RootId;
use crate::value::Value;

pub type FrameRef = Rc<Frame>;

/// Activation record of one root. Slot layout is fixed per root; closures
/// keep their defining frame alive through `parent`.
pub struct Frame {
    root: RootId,
    slots: RefCell<Vec<Value>>,
    arguments: Vec<Value>,
    parent: Option<FrameRef>,
}

impl Frame {
    pub fn new(root: RootId, slot_count: usize, arguments: Vec<Value>, parent: Option<FrameRef>) -> FrameRef {
        let mut slots = alloc::vec![Value::Undefined; slot_count];
        for (slot, arg) in slots.iter_mut().zip(&arguments) {
            *slot = arg.clone();
        }
        Rc::new(Frame {
            root,
            slots: RefCell::new(slots),
            arguments,
            parent,
        })
    }

    pub fn root(&self) -> RootId {
        self.root
    }

    pub fn arguments(&self) -> &[Value] {
        &self.arguments
    }

    pub fn parent(&self) -> Option<&FrameRef> {
        self.parent.as_ref()
    }

    #[inline]
    pub fn get(&self, slot: usize) -> Value {
        self.slots.borrow()[slot].clone()
    }

    #[inline]
    pub fn set(&self, slot: usize, value: Value) {
        self.slots.borrow_mut()[slot] = value;
    }

    pub fn slot_count(&self) -> usize {
        self.slots.borrow().len()
    }

    /// Frame `depth` levels up the lexical chain (0 = self).
    #[allow(clippy::needless_lifetimes)]
    pub fn ancestor<'a>(self: &'a FrameRef, depth: u32) -> Option<&'a FrameRef> {
        let mut frame = self;
        for _ in 0..depth {
            frame = frame.parent.as_ref()?;
        }
        Some(frame)
    }
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Frame")
            .field("root", &self.root)
            .field("slots", &self.slots.borrow())
            .finish()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScopeVariable {
    pub name: String,
    pub value: Value,
    pub writable: bool,
    pub internal: bool,
}

/// A named group of variables visible at some program point.
#[derive(Clone, Debug, PartialEq)]
pub struct Scope {
    pub name: String,
    pub variables: Vec<ScopeVariable>,
}

impl Scope {
    pub fn get(&self, name: &str) -> Option<&ScopeVariable> {
        self.variables.iter().find(|v| v.name == name)
    }
}
