//! Host runtime for probevm: process host, tool reports, the WebSocket
//! debug server, a terminal debugger and the overhead benchmarks.

pub mod bench;
pub mod host;
pub mod repl;
pub mod reports;
pub mod run;
pub mod server;

pub use host::{on_engine_thread, StdHost};
pub use run::{run_source, Lang, RunOptions, RunOutcome};
