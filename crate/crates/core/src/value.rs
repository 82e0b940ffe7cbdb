//! Guest values shared by every frontend.

use alloc::rc::Rc;
use alloc::string::String;
use core::fmt;

use crate::frame::FrameRef;
use crate::node::RootId;

#[derive(Clone)]
pub enum Value {
    Int(i64),
    Float(f64),
    Bool(bool),
    Str(Rc<str>),
    Null,
    Function(Rc<Function>),
    /// Content of a slot that was never assigned. Reading it is an error.
    Undefined,
}

pub enum Function {
    Closure {
        root: RootId,
        name: Rc<str>,
        arity: usize,
        captured: Option<FrameRef>,
    },
    Native(Native),
}

/// Host-implemented builtins.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Native {
    Print,
    Clock,
    Exit,
    Str,
    /// Raises an internal interpreter error; exercises the internal-error path.
    Fault,
}

impl Native {
    pub const ALL: [Native; 5] = [Native::Print, Native::Clock, Native::Exit, Native::Str, Native::Fault];

    pub fn name(self) -> &'static str {
        match self {
            Native::Print => "print",
            Native::Clock => "clock",
            Native::Exit => "exit",
            Native::Str => "str",
            Native::Fault => "__fault",
        }
    }
}

impl Function {
    pub fn name(&self) -> &str {
        match self {
            Function::Closure { name, .. } => name,
            Function::Native(n) => n.name(),
        }
    }

    /// `None` for variadic natives.
    pub fn arity(&self) -> Option<usize> {
        match self {
            Function::Closure { arity, .. } => Some(*arity),
            Function::Native(Native::Print) => None,
            Function::Native(Native::Clock) | Function::Native(Native::Fault) => Some(0),
            Function::Native(Native::Exit) | Function::Native(Native::Str) => Some(1),
        }
    }
}

impl Value {
    pub fn str(s: &str) -> Value {
        Value::Str(Rc::from(s))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "Int",
            Value::Float(_) => "Float",
            Value::Bool(_) => "Bool",
            Value::Str(_) => "Str",
            Value::Null => "Null",
            Value::Function(_) => "Function",
            Value::Undefined => "Undefined",
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// Language-neutral equality used by `==` in both frontends: numbers
    /// compare by value across Int/Float, functions by identity.
    pub fn guest_eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Float(a), Value::Float(b)) => a == b,
            (Value::Int(a), Value::Float(b)) | (Value::Float(b), Value::Int(a)) => (*a as f64) == *b,
            (Value::Bool(a), Value::Bool(b)) => a == b,
            (Value::Str(a), Value::Str(b)) => a == b,
            (Value::Null, Value::Null) | (Value::Undefined, Value::Undefined) => true,
            (Value::Function(a), Value::Function(b)) => Rc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl PartialEq for Value {
    /// Structural equality that also distinguishes Int from Float.
    fn eq(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Int(_), Value::Float(_)) | (Value::Float(_), Value::Int(_)) => false,
            _ => self.guest_eq(other),
        }
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "Int({i})"),
            Value::Float(x) => write!(f, "Float({x:?})"),
            Value::Bool(b) => write!(f, "Bool({b})"),
            Value::Str(s) => write!(f, "Str({s:?})"),
            Value::Null => f.write_str("Null"),
            Value::Function(func) => write!(f, "Function({})", func.name()),
            Value::Undefined => f.write_str("Undefined"),
        }
    }
}

/// Float rendering with a mandatory fractional part for integral values,
/// e.g. `1.0`, `-3.0`, `0.25`.
pub fn float_with_point(x: f64) -> String {
    use core::fmt::Write;
    let mut s = String::new();
    if x.is_nan() {
        s.push_str("nan");
    } else if x.is_infinite() {
        s.push_str(if x > 0.0 { "inf" } else { "-inf" });
    } else if x == (x as i64) as f64 && x.abs() < 1e16 {
        let _ = write!(s, "{x:.1}");
    } else {
        let _ = write!(s, "{x}");
    }
    s
}
