//! One program run with optional tools, as `probevm run` performs it.

use std::path::Path;

use probevm_core::exception::ExceptionKind;
use probevm_core::host::Host;
use probevm_core::interp::Engine;
use probevm_core::tools::{limit_statements, Coverage, Profiler, TraceLog};
use probevm_core::Error;

use crate::host::catch_panic;
use crate::reports::{CoverageJson, ProfileJson, RunReport, TraceJson};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Lang {
    #[default]
    Auto,
    Toylang,
    Minicalc,
}

impl Lang {
    /// Language id for `path`; `Auto` picks by extension and defaults to
    /// toylang.
    pub fn resolve(self, path: &Path) -> &'static str {
        match self {
            Lang::Toylang => "toylang",
            Lang::Minicalc => "minicalc",
            Lang::Auto => match path.extension().and_then(|e| e.to_str()) {
                Some("calc" | "mc") => "minicalc",
                _ => "toylang",
            },
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub coverage: bool,
    pub trace: bool,
    pub profile: bool,
    pub limit_statements: Option<u64>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub exit_code: i32,
    /// Failure message for stderr.
    pub error: Option<String>,
    pub report: RunReport,
}

/// Process exit code for a finished run.
pub fn exit_code_of(result: &Result<probevm_core::Value, Error>) -> (i32, Option<String>) {
    match result {
        Ok(_) => (0, None),
        Err(Error::Guest(g)) if g.kind == ExceptionKind::Exit => (
            g.exit_code.unwrap_or(0).clamp(i32::MIN as i64, i32::MAX as i64) as i32,
            None,
        ),
        Err(e) => (1, Some(e.to_string())),
    }
}

pub fn new_engine(host: Box<dyn Host>) -> Engine {
    let mut engine = Engine::new(host);
    engine.set_panic_guard(Some(catch_panic));
    engine
}

pub fn run_source(host: Box<dyn Host>, name: &str, language_id: &str, text: &str, options: &RunOptions) -> RunOutcome {
    let mut engine = new_engine(host);
    let coverage = options
        .coverage
        .then(|| Coverage::start(&mut engine).expect("open engine"));
    let profiler = options
        .profile
        .then(|| Profiler::start(&mut engine).expect("open engine"));
    let trace = options
        .trace
        .then(|| TraceLog::start(&mut engine).expect("open engine"));
    let _limit = options
        .limit_statements
        .map(|n| limit_statements(&mut engine, n).expect("open engine"));
    let result = engine.eval_source(name, language_id, text);
    let (exit_code, error) = exit_code_of(&result);
    let report = RunReport {
        coverage: coverage.map(|c| CoverageJson::from(&c.report(&engine))),
        profile: profiler.map(|p| ProfileJson::from(&p.report())),
        trace: trace.map(|t| TraceJson::new(&t.entries())),
    };
    RunOutcome {
        exit_code,
        error,
        report,
    }
}
