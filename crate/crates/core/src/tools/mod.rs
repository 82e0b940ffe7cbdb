//! Built-in instruments. Each one is an ordinary client of the instrument
//! API and selects locations by tag only, so it works for every frontend.

pub mod coverage;
pub mod limiter;
pub mod profiler;
pub mod trace;

pub use coverage::{Coverage, CoverageReport, SourceCoverage, StatementCount};
pub use limiter::{limit_statements, StatementLimit};
pub use profiler::{ProfileReport, Profiler, RootProfile};
pub use trace::{clear_trace, set_trace, set_trace_code, TraceEntry, TraceEvent, TraceHandle, TraceLog};

use crate::source::SourceSection;

/// Position-independent identity of a section: source name, start, length.
pub(crate) type SectionKey = (alloc::string::String, usize, usize);

pub(crate) fn section_key(section: &SourceSection) -> SectionKey {
    (section.source().name().into(), section.char_start(), section.length())
}
