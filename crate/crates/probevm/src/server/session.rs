//! Engine-thread side of the debug server: executes requests against the
//! engine and debug session and produces responses and events.

use std::cell::{Cell, RefCell};
use std::rc::Rc;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use crossbeam_channel::{Receiver, Sender, TrySendError};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use probevm_core::debugger::{
    BreakpointInfo, BreakpointStatus, DebugSession, ResumeAction, StackFrameInfo, SuspendHandler, Suspension,
};
use probevm_core::host::{Command, CommandSource};
use probevm_core::interp::Engine;
use probevm_core::tools::{clear_trace, set_trace, Coverage, TraceHandle};

use super::protocol::{self, *};
use crate::reports::CoverageJson;
use crate::run::exit_code_of;

pub enum Control {
    Request(Request),
    Disconnected,
    Shutdown,
}

struct Attached {
    tx: Sender<String>,
    overflowed: Arc<AtomicBool>,
}

/// Outbound messages for the attached client, if any. Never blocks: a full
/// queue marks the client overflowed and detaches it.
#[derive(Clone, Default)]
pub struct EventSink {
    inner: Arc<Mutex<Option<Attached>>>,
}

impl EventSink {
    pub fn attach(&self, tx: Sender<String>, overflowed: Arc<AtomicBool>) {
        *self.inner.lock().unwrap() = Some(Attached { tx, overflowed });
    }

    pub fn detach(&self) {
        *self.inner.lock().unwrap() = None;
    }

    pub fn send(&self, message: String) {
        let mut slot = self.inner.lock().unwrap();
        let Some(a) = slot.as_ref() else { return };
        match a.tx.try_send(message) {
            Ok(()) => {}
            Err(TrySendError::Full(_)) => {
                a.overflowed.store(true, Ordering::SeqCst);
                *slot = None;
            }
            Err(TrySendError::Disconnected(_)) => *slot = None,
        }
    }

    pub fn event(&self, method: &str, params: Value) {
        self.send(protocol::event(method, params));
    }
}

/// Shared by the main loop, the suspend handler and queued commands.
struct Ctx {
    session: DebugSession,
    sink: EventSink,
    coverage: Coverage,
    trace: RefCell<Option<TraceHandle>>,
    suspended: Rc<Cell<bool>>,
    runs: Cell<u32>,
    shutdown: Cell<bool>,
    last_exit: Cell<i32>,
}

fn ctx(engine: &Engine) -> Rc<Ctx> {
    engine.extension::<Rc<Ctx>>().expect("server context").clone()
}

enum Target<'s, 'a> {
    Idle(&'s mut Engine),
    Running(&'s mut Engine),
    Suspended(&'s mut Suspension<'a>),
}

impl Target<'_, '_> {
    fn engine(&mut self) -> &mut Engine {
        match self {
            Target::Idle(e) | Target::Running(e) => e,
            Target::Suspended(s) => s.engine_mut(),
        }
    }
}

enum Flow {
    Done,
    /// Announce the breakpoint after the response.
    Resolved(BreakpointInfo),
    Run(String),
    Resume(ResumeAction),
}

struct Failure(i64, String);

fn params<T: DeserializeOwned>(p: &Value) -> Result<T, Failure> {
    serde_json::from_value(p.clone()).map_err(|e| Failure(INVALID_PARAMS, e.to_string()))
}

fn not_suspended() -> Failure {
    Failure(NOT_SUSPENDED, "not suspended".into())
}

pub fn frame_json(f: &StackFrameInfo) -> Value {
    let (line, col) = f.position().unwrap_or((0, 0));
    json!({"name": f.name, "source": f.source_name(), "line": line, "col": col})
}

fn breakpoint_resolved(sink: &EventSink, info: &BreakpointInfo) {
    if let BreakpointStatus::Resolved { line } = info.status {
        sink.event("bp.resolved", json!({"id": info.id, "line": line}));
    }
}

fn handle(target: &mut Target<'_, '_>, req: &Request) -> Result<(Value, Flow), Failure> {
    let cx = ctx(target.engine());
    let p = &req.params;
    let done = |v: Value| Ok((v, Flow::Done));
    match req.method.as_str() {
        "sources.list" => {
            let list: Vec<Value> = target
                .engine()
                .sources()
                .iter()
                .filter(|s| !s.is_internal())
                .map(|s| json!({"name": s.name(), "language": s.language_id()}))
                .collect();
            done(json!({"sources": list}))
        }
        "source.get" => {
            let q: SourceGet = params(p)?;
            let engine = target.engine();
            match engine.source(&q.name).filter(|s| !s.is_internal()) {
                Some(s) => done(json!({"name": s.name(), "language": s.language_id(), "text": s.text()})),
                None => Err(Failure(INVALID_PARAMS, format!("unknown source `{}`", q.name))),
            }
        }
        "bp.set" => {
            let q: BpSet = params(p)?;
            let condition = q.condition.as_deref().filter(|c| !c.trim().is_empty());
            let info = cx
                .session
                .set_breakpoint(target.engine(), &q.source, q.line, condition)
                .map_err(|e| Failure(INVALID_PARAMS, e.to_string()))?;
            let resolved = matches!(info.status, BreakpointStatus::Resolved { .. });
            Ok((json!({"id": info.id, "resolved": resolved}), Flow::Resolved(info)))
        }
        "bp.remove" => {
            let q: BpRemove = params(p)?;
            if cx.session.remove_breakpoint(target.engine(), q.id) {
                done(json!({}))
            } else {
                Err(Failure(INVALID_PARAMS, format!("unknown breakpoint {}", q.id)))
            }
        }
        "run" => {
            if !matches!(target, Target::Idle(_)) {
                return Err(Failure(ALREADY_RUNNING, "already running".into()));
            }
            let q: Run = params(p)?;
            if !q.args.is_empty() {
                return Err(Failure(INVALID_PARAMS, "programs take no arguments".into()));
            }
            if target.engine().source(&q.source).is_none_or(|s| s.is_internal()) {
                return Err(Failure(INVALID_PARAMS, format!("unknown source `{}`", q.source)));
            }
            Ok((json!({}), Flow::Run(q.source)))
        }
        "resume" | "stepInto" | "stepOver" | "stepOut" => {
            if !matches!(target, Target::Suspended(_)) {
                return Err(not_suspended());
            }
            let action = match req.method.as_str() {
                "resume" => ResumeAction::Continue,
                "stepInto" => ResumeAction::StepInto,
                "stepOver" => ResumeAction::StepOver,
                _ => ResumeAction::StepOut,
            };
            Ok((json!({}), Flow::Resume(action)))
        }
        "pause" => match target {
            Target::Running(e) => {
                cx.session
                    .pause(e)
                    .map_err(|e| Failure(INVALID_PARAMS, e.to_string()))?;
                done(json!({}))
            }
            Target::Idle(_) => Err(Failure(NOT_RUNNING, "not running".into())),
            Target::Suspended(_) => done(json!({})),
        },
        "stack" => match target {
            Target::Suspended(s) => {
                let frames: Vec<Value> = s.stack().iter().map(frame_json).collect();
                done(json!({"frames": frames}))
            }
            _ => Err(not_suspended()),
        },
        "scopes" => match target {
            Target::Suspended(s) => {
                let q: Scopes = params(p)?;
                // internal slots are sent flagged; the client decides whether to show them
                cx.session.set_include_internal(true);
                let scopes = s.scopes(q.frame_index);
                cx.session.set_include_internal(false);
                let scopes = scopes.map_err(|e| Failure(INVALID_PARAMS, e.to_string()))?;
                let lang = s.context().language_id.clone();
                let list: Vec<Value> = scopes
                    .iter()
                    .map(|sc| {
                        let vars: Vec<Value> = sc
                            .variables
                            .iter()
                            .map(|v| {
                                json!({
                                    "name": v.name,
                                    "value": s.engine().display_value(&lang, &v.value),
                                    "type": v.value.type_name(),
                                    "internal": v.internal,
                                })
                            })
                            .collect();
                        json!({"name": sc.name, "variables": vars})
                    })
                    .collect();
                done(json!({"scopes": list}))
            }
            _ => Err(not_suspended()),
        },
        "eval" => match target {
            Target::Suspended(s) => {
                let q: Eval = params(p)?;
                if q.frame_index >= s.stack().len() {
                    return Err(Failure(INVALID_PARAMS, format!("no frame {}", q.frame_index)));
                }
                match s.eval(q.frame_index, &q.text) {
                    Ok(out) => done(json!({"value": out.display, "type": out.value.type_name()})),
                    Err(e) => Err(Failure(EVAL_FAILED, e.to_string())),
                }
            }
            _ => Err(not_suspended()),
        },
        "coverage.report" => {
            let report = cx.coverage.report(target.engine());
            done(serde_json::to_value(CoverageJson::from(&report)).expect("report serializes"))
        }
        "trace.enable" => {
            if cx.trace.borrow().is_none() {
                let sink = cx.sink.clone();
                let handle = set_trace(target.engine(), move |ev| {
                    let lc = ev.section().line_col();
                    let text = format!(
                        "trace {}:{}:{} {}\n",
                        ev.section().source().name(),
                        lc.start_line,
                        lc.start_col,
                        ev.root_name()
                    );
                    sink.event("output", json!({"text": text}));
                })
                .map_err(|e| Failure(INVALID_PARAMS, e.to_string()))?;
                *cx.trace.borrow_mut() = Some(handle);
            }
            done(json!({}))
        }
        "trace.disable" => {
            let trace = cx.trace.borrow_mut().take();
            if let Some(h) = trace {
                clear_trace(target.engine(), h);
            }
            done(json!({}))
        }
        other => Err(Failure(METHOD_NOT_FOUND, format!("method not found: {other}"))),
    }
}

/// Runs one request and sends its response, then any events it caused.
fn respond(target: &mut Target<'_, '_>, req: &Request) -> Flow {
    let cx = ctx(target.engine());
    let flow = match handle(target, req) {
        Ok((result, flow)) => {
            cx.sink.send(protocol::response(&req.id, result));
            flow
        }
        Err(Failure(code, message)) => {
            cx.sink.send(protocol::error(&req.id, code, &message));
            Flow::Done
        }
    };
    if let Flow::Resolved(info) = &flow {
        breakpoint_resolved(&cx.sink, info);
    }
    flow
}

/// Removes everything a departed client left behind.
fn detach(engine: &mut Engine) {
    let cx = ctx(engine);
    for bp in cx.session.breakpoints() {
        cx.session.remove_breakpoint(engine, bp.id);
    }
    cx.session.reset_stepping(engine);
    let trace = cx.trace.borrow_mut().take();
    if let Some(h) = trace {
        clear_trace(engine, h);
    }
}

struct Handler {
    ctrl: Receiver<Control>,
    pending: Arc<AtomicBool>,
    sink: EventSink,
}

impl SuspendHandler for Handler {
    fn on_suspend(&mut self, s: &mut Suspension<'_>) -> ResumeAction {
        let cx = ctx(s.engine());
        let stack: Vec<Value> = s.stack().iter().map(frame_json).collect();
        self.sink
            .event("suspended", json!({"reason": s.reason().as_str(), "stack": stack}));
        cx.suspended.set(true);
        let action = loop {
            match self.ctrl.recv() {
                Ok(Control::Request(req)) => {
                    if let Flow::Resume(action) = respond(&mut Target::Suspended(s), &req) {
                        break action;
                    }
                }
                Ok(Control::Disconnected) => {
                    detach(s.engine_mut());
                    break ResumeAction::Continue;
                }
                Ok(Control::Shutdown) | Err(_) => {
                    cx.shutdown.set(true);
                    break ResumeAction::Terminate;
                }
            }
        };
        cx.suspended.set(false);
        if !self.ctrl.is_empty() {
            self.pending.store(true, Ordering::Release);
        }
        self.sink.event("resumed", json!({}));
        action
    }

    fn on_breakpoint_resolved(&mut self, info: &BreakpointInfo) {
        breakpoint_resolved(&self.sink, info);
    }
}

/// Requests that arrive while the program runs, applied at safepoints.
struct Queue {
    ctrl: Receiver<Control>,
    suspended: Rc<Cell<bool>>,
}

impl CommandSource for Queue {
    fn drain(&mut self) -> Vec<Command> {
        if self.suspended.get() {
            return Vec::new();
        }
        self.ctrl
            .try_iter()
            .map(|c| -> Command {
                match c {
                    Control::Request(req) => Box::new(move |e: &mut Engine| {
                        respond(&mut Target::Running(e), &req);
                    }),
                    Control::Disconnected => Box::new(detach),
                    Control::Shutdown => Box::new(|e: &mut Engine| {
                        ctx(e).shutdown.set(true);
                        detach(e);
                        e.cancel("server shut down");
                    }),
                }
            })
            .collect()
    }
}

/// When the engine loop stops serving.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lifetime {
    /// Until shut down.
    Forever,
    /// Until the client disconnects after at least one run.
    OneSession,
}

/// Serves requests until shutdown; returns the last run's exit code.
pub fn engine_loop(
    engine: &mut Engine,
    ctrl: Receiver<Control>,
    pending: Arc<AtomicBool>,
    sink: EventSink,
    lifetime: Lifetime,
) -> i32 {
    let handler = Handler {
        ctrl: ctrl.clone(),
        pending: pending.clone(),
        sink: sink.clone(),
    };
    let session = DebugSession::start(engine, Box::new(handler)).expect("fresh engine");
    let coverage = Coverage::start(engine).expect("fresh engine");
    let suspended = Rc::new(Cell::new(false));
    let cx = Rc::new(Ctx {
        session,
        sink,
        coverage,
        trace: RefCell::new(None),
        suspended: suspended.clone(),
        runs: Cell::new(0),
        shutdown: Cell::new(false),
        last_exit: Cell::new(0),
    });
    engine.insert_extension(cx.clone());
    engine.set_command_source(
        Box::new(Queue {
            ctrl: ctrl.clone(),
            suspended: suspended.clone(),
        }),
        pending.clone(),
    );
    while !cx.shutdown.get() {
        let req = match ctrl.recv() {
            Ok(Control::Request(req)) => req,
            Ok(Control::Disconnected) => {
                detach(engine);
                if lifetime == Lifetime::OneSession && cx.runs.get() > 0 {
                    break;
                }
                continue;
            }
            Ok(Control::Shutdown) | Err(_) => break,
        };
        if let Flow::Run(source) = respond(&mut Target::Idle(engine), &req) {
            cx.runs.set(cx.runs.get() + 1);
            let result = engine
                .source(&source)
                .cloned()
                .ok_or_else(|| probevm_core::Error::UnknownSource(source.clone()))
                .and_then(|src| engine.load(&src))
                .and_then(|main| engine.execute_root(main, Vec::new()));
            cx.session.reset_stepping(engine);
            let (code, error) = exit_code_of(&result);
            cx.last_exit.set(code);
            match error {
                None => cx.sink.event("terminated", json!({"exitCode": code})),
                Some(e) => cx.sink.event("terminated", json!({"error": e})),
            }
        }
    }
    cx.session.close(engine);
    cx.last_exit.get()
}
