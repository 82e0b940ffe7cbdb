//! Instrumentable, self-specializing AST interpreter.
//!
//! Guest languages lower source text into a shared node vocabulary. Clients
//! subscribe to execution events at locations selected by
//! [`SourceSectionFilter`]s; the engine splices probe wrappers into the
//! executing trees on demand and removes them again when unused.
//!
//! The crate is `no_std` and needs only `alloc`; hosts supply output, clocks
//! and cross-thread command delivery through [`Host`] and
//! [`CommandSource`].

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod debugger;
pub mod error;
pub mod exception;
pub mod filter;
pub mod frame;
pub mod host;
pub mod instrument;
pub mod interp;
pub mod lang;
pub mod node;
pub mod source;
pub mod spi;
pub mod tools;
pub mod value;

pub use error::{Error, Result};
pub use exception::{ExceptionKind, GuestException, RawError, StackTraceEntry};
pub use filter::{FilterBuilder, SourceSectionFilter};
pub use frame::{Frame, FrameRef, Scope, ScopeVariable};
pub use host::{BufferHost, Command, CommandSource, Host, NullHost, PanicGuard};
pub use instrument::{
    enter_listener, BindingId, ClientError, ClientResult, EventBinding, EventContext, EventCx, EventMask,
    ExecutionEventListener, ExecutionEventNode, ExecutionEventNodeFactory, FactoryCx, LoadSourceListener,
    ProgramLoadListener,
};
pub use interp::{Engine, Fragment, StackEntry, MAX_CALL_DEPTH};
pub use node::{NodeId, NodeKind, NodeState, ProbeId, RootId, RootNode, Tag, TagSet, Tier, REWRITE_LIMIT};
pub use source::{LineCol, Source, SourceSection};
pub use spi::LanguageFrontend;
pub use value::{Function, Native, Value};
