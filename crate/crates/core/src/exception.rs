//! Language-agnostic exceptional outcomes.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::source::SourceSection;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExceptionKind {
    Syntax,
    Runtime,
    Internal,
    /// Explicit program request to terminate, carrying an exit code.
    Exit,
    /// Execution stopped by a tool (resource limiter, debugger kill).
    Cancelled,
}

impl ExceptionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExceptionKind::Syntax => "syntax",
            ExceptionKind::Runtime => "runtime",
            ExceptionKind::Internal => "internal",
            ExceptionKind::Exit => "exit",
            ExceptionKind::Cancelled => "cancelled",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StackTraceEntry {
    pub root_name: String,
    pub section: Option<SourceSection>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GuestException {
    pub kind: ExceptionKind,
    pub message: String,
    pub location: Option<SourceSection>,
    pub language_id: String,
    /// Innermost first.
    pub guest_stack: Vec<StackTraceEntry>,
    pub exit_code: Option<i64>,
}

impl GuestException {
    pub fn new(kind: ExceptionKind, message: impl Into<String>, language_id: &str) -> Self {
        GuestException {
            kind,
            message: message.into(),
            location: None,
            language_id: language_id.into(),
            guest_stack: Vec::new(),
            exit_code: None,
        }
    }

    pub fn with_location(mut self, location: Option<SourceSection>) -> Self {
        self.location = location;
        self
    }

    pub fn syntax(message: impl Into<String>, location: SourceSection) -> Self {
        let lang = String::from(location.source().language_id());
        GuestException::new(ExceptionKind::Syntax, message, &lang).with_location(Some(location))
    }
}

impl fmt::Display for GuestException {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind.as_str(), self.message)?;
        if let Some(loc) = &self.location {
            write!(f, " at {loc}")?;
        }
        Ok(())
    }
}

impl core::error::Error for GuestException {}

/// Raw interpreter failures before a frontend wraps them.
#[derive(Clone, Debug, PartialEq)]
pub enum RawError {
    DivisionByZero,
    UndefinedVariable(String),
    Type(String),
    Arity { name: String, expected: usize, got: usize },
    NotCallable(String),
    Overflow,
    StackOverflow,
    Exit(i64),
    Cancelled(String),
    Internal(String),
}
