use alloc::boxed::Box;
use alloc::string::String;

use crate::exception::GuestException;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Host-level API errors. Guest program failures travel as
/// [`GuestException`] inside [`Error::Guest`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid source: {0}")]
    InvalidSource(String),
    #[error("duplicate source name `{0}`")]
    DuplicateSource(String),
    #[error("unknown source `{0}`")]
    UnknownSource(String),
    #[error("no frontend registered for language `{0}`")]
    UnknownLanguage(String),
    #[error("section [{start}, {start}+{length}) exceeds source length {source_len}")]
    InvalidSection {
        start: usize,
        length: usize,
        source_len: usize,
    },
    #[error("position {line}:{col} is outside the source text")]
    InvalidPosition { line: usize, col: usize },
    #[error("illegal rewrite: {0}")]
    IllegalRewrite(&'static str),
    #[error("scope error: {0}")]
    Scope(String),
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("engine is closed")]
    EngineClosed,
    #[error("re-entrant execution is not permitted")]
    Reentrancy,
    #[error("a debug session is already active on this engine")]
    SessionActive,
    #[error("unknown binding {0}")]
    UnknownBinding(u32),
    #[error(transparent)]
    Guest(Box<GuestException>),
}

impl From<GuestException> for Error {
    fn from(e: GuestException) -> Self {
        Error::Guest(Box::new(e))
    }
}
