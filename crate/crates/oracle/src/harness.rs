//! Runs programs on the real engine in the shape the evaluator reports.

use std::cell::RefCell;
use std::rc::Rc;

use probevm_core::exception::ExceptionKind;
use probevm_core::filter::SourceSectionFilter;
use probevm_core::host::BufferHost;
use probevm_core::instrument::enter_listener;
use probevm_core::interp::Engine;
use probevm_core::lang::toylang::syntax::Span;
use probevm_core::node::Tag;
use probevm_core::Error;

use crate::eval::Failure;

pub const SOURCE_NAME: &str = "t.toy";

#[derive(Clone, Debug, PartialEq)]
pub struct EngineRun {
    pub output: String,
    pub result: Result<String, Failure>,
    /// Statement entries seen by each recording client.
    pub traces: Vec<Vec<Span>>,
    pub diagnostics: Vec<String>,
}

pub fn failure_of(e: &Error) -> Failure {
    match e {
        Error::Guest(g) => match g.kind {
            ExceptionKind::Syntax => Failure::Syntax,
            ExceptionKind::Runtime => Failure::Runtime,
            ExceptionKind::Internal => Failure::Internal,
            ExceptionKind::Exit => Failure::Exit(g.exit_code.unwrap_or(0)),
            ExceptionKind::Cancelled => Failure::Diverged,
        },
        _ => Failure::Internal,
    }
}

pub fn statements() -> Rc<SourceSectionFilter> {
    SourceSectionFilter::builder()
        .tag_is(Tag::Statement)
        .source_is(SOURCE_NAME)
        .build()
        .expect("valid filter")
}

/// Runs `text` with `recorders` statement-recording clients and,
/// optionally, one client that fails on every statement entry.
pub fn run_engine(text: &str, recorders: usize, throwing: bool) -> EngineRun {
    let host = BufferHost::new();
    let mut engine = Engine::new(Box::new(host.clone()));
    let logs: Vec<Rc<RefCell<Vec<Span>>>> = (0..recorders).map(|_| Default::default()).collect();
    for (i, log) in logs.iter().enumerate() {
        if throwing && i == 1 {
            attach_thrower(&mut engine);
        }
        let log = log.clone();
        engine
            .attach_listener(
                statements(),
                enter_listener(move |cx| {
                    let s = &cx.context().section;
                    log.borrow_mut().push(Span::new(s.char_start(), s.length()));
                    Ok(())
                }),
            )
            .expect("attach");
    }
    if throwing && recorders < 2 {
        attach_thrower(&mut engine);
    }
    let result = engine
        .eval_source(SOURCE_NAME, "toylang", text)
        .map(|v| engine.frontend("toylang").expect("toylang").to_display_string(&v))
        .map_err(|e| failure_of(&e));
    EngineRun {
        output: host.output(),
        result,
        traces: logs.iter().map(|l| l.borrow().clone()).collect(),
        diagnostics: host.diagnostics(),
    }
}

fn attach_thrower(engine: &mut Engine) {
    engine
        .attach_listener(statements(), enter_listener(|_| Err("client failure".into())))
        .expect("attach");
}
