//! Source-level debugging on top of the instrument API: line breakpoints
//! (optionally conditional), stepping, stack and scope inspection and
//! evaluation in suspended frames.
//!
//! Suspension happens inside a statement's enter event, so the statement
//! has not run yet. The engine thread stays inside
//! [`SuspendHandler::on_suspend`] until the handler picks a
//! [`ResumeAction`]; hosts that drive the session from another thread block
//! there on their command channel.

use alloc::boxed::Box;
use alloc::rc::{Rc, Weak};
use alloc::string::String;
use alloc::vec::Vec;
use core::cell::RefCell;

use crate::error::{Error, Result};
use crate::filter::SourceSectionFilter;
use crate::frame::{FrameRef, Scope};
use crate::instrument::{
    BindingId, ClientError, ClientResult, EventBinding, EventContext, EventCx, EventMask, ExecutionEventListener,
    ExecutionEventNode, ExecutionEventNodeFactory, FactoryCx, ProgramLoadListener,
};
use crate::interp::{Engine, Fragment};
use crate::node::{NodeId, RootId, Tag};
use crate::source::{Source, SourceSection};
use crate::value::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResumeAction {
    Continue,
    StepInto,
    StepOver,
    StepOut,
    /// Cancels the running program.
    Terminate,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SuspendReason {
    /// Breakpoint ids whose location (and condition) matched.
    Breakpoint(Vec<u32>),
    Step,
}

impl SuspendReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            SuspendReason::Breakpoint(_) => "breakpoint",
            SuspendReason::Step => "step",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BreakpointStatus {
    /// The source has not been loaded yet.
    Pending,
    Resolved {
        line: usize,
    },
    /// No statement starts on or after the requested line.
    Unresolved,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BreakpointInfo {
    pub id: u32,
    pub source: String,
    /// Line as requested.
    pub line: usize,
    pub condition: Option<String>,
    pub enabled: bool,
    pub status: BreakpointStatus,
    pub hit_count: u64,
    /// Last failure evaluating the condition.
    pub condition_error: Option<String>,
}

impl BreakpointInfo {
    pub fn resolved_line(&self) -> Option<usize> {
        match self.status {
            BreakpointStatus::Resolved { line } => Some(line),
            _ => None,
        }
    }
}

/// One visible activation, innermost first.
#[derive(Clone, Debug, PartialEq)]
pub struct StackFrameInfo {
    pub name: String,
    pub section: Option<SourceSection>,
}

impl StackFrameInfo {
    pub fn source_name(&self) -> Option<&str> {
        self.section.as_ref().map(|s| s.source().name())
    }

    /// 1-based line and column of the current location.
    pub fn position(&self) -> Option<(usize, usize)> {
        self.section.as_ref().map(|s| {
            let lc = s.line_col();
            (lc.start_line, lc.start_col)
        })
    }
}

/// Result of evaluating text in a suspended frame.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutcome {
    pub value: Value,
    pub display: String,
}

pub trait SuspendHandler {
    fn on_suspend(&mut self, suspension: &mut Suspension<'_>) -> ResumeAction;

    /// A pending breakpoint was resolved after its source loaded.
    fn on_breakpoint_resolved(&mut self, _breakpoint: &BreakpointInfo) {}
}

impl<F> SuspendHandler for F
where
    F: FnMut(&mut Suspension<'_>) -> ResumeAction,
{
    fn on_suspend(&mut self, suspension: &mut Suspension<'_>) -> ResumeAction {
        self(suspension)
    }
}

struct FrameSlot {
    info: StackFrameInfo,
    root: RootId,
    node: NodeId,
    frame: FrameRef,
}

/// The halted program, handed to [`SuspendHandler::on_suspend`].
pub struct Suspension<'a> {
    engine: &'a mut Engine,
    session: DebugSession,
    reason: SuspendReason,
    context: EventContext,
    frames: Vec<FrameSlot>,
}

impl Suspension<'_> {
    pub fn reason(&self) -> &SuspendReason {
        &self.reason
    }

    /// Location of the statement about to run.
    pub fn context(&self) -> &EventContext {
        &self.context
    }

    pub fn stack(&self) -> Vec<StackFrameInfo> {
        self.frames.iter().map(|f| f.info.clone()).collect()
    }

    fn slot(&self, frame_index: usize) -> Result<&FrameSlot> {
        self.frames
            .get(frame_index)
            .ok_or_else(|| Error::Scope(alloc::format!("no frame {frame_index}")))
    }

    /// Variables of a frame and of its lexically enclosing frames, innermost
    /// first.
    pub fn scopes(&self, frame_index: usize) -> Result<Vec<Scope>> {
        let include_internal = self.session.include_internal();
        let slot = self.slot(frame_index)?;
        let mut out = self
            .engine
            .find_local_scopes(slot.root, slot.node, &slot.frame, include_internal)?;
        let mut parent = slot.frame.parent().cloned();
        while let Some(frame) = parent {
            let root = self.engine.root(frame.root());
            let name = if root.lexical_parent.is_none() {
                "global"
            } else {
                &*root.name
            };
            out.push(crate::spi::frame_scope(root, &frame, include_internal, name)?);
            parent = frame.parent().cloned();
        }
        Ok(out)
    }

    /// Evaluates `text` in a frame. Assignments persist in that frame.
    pub fn eval(&mut self, frame_index: usize, text: &str) -> Result<EvalOutcome> {
        let slot = self.slot(frame_index)?;
        let (root, node, frame) = (slot.root, slot.node, slot.frame.clone());
        let value = self.engine.eval_in_frame(root, node, &frame, text)?;
        let lang = self.engine.root(root).language_id.clone();
        let display = self.engine.display_value(&lang, &value);
        Ok(EvalOutcome { value, display })
    }

    pub fn session(&self) -> DebugSession {
        self.session.clone()
    }

    pub fn engine(&self) -> &Engine {
        self.engine
    }

    pub fn engine_mut(&mut self) -> &mut Engine {
        self.engine
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Run,
    StepInto,
    StepOver(usize),
    StepOut(usize),
}

struct Breakpoint {
    info: BreakpointInfo,
    binding: Option<EventBinding>,
}

struct State {
    breakpoints: Vec<Breakpoint>,
    next_id: u32,
    mode: Mode,
    step_binding: Option<EventBinding>,
    last_seq: u64,
    include_internal: bool,
    load_binding: Option<BindingId>,
    /// Breakpoints matched by the current enter event, collected until the
    /// suspension happens.
    hits: Vec<u32>,
}

struct Inner {
    state: RefCell<State>,
    handler: RefCell<Option<Box<dyn SuspendHandler>>>,
}

/// Marks an engine as having a live session.
struct SessionMarker;

/// Handle to the engine's debugging session. Cheap to clone.
#[derive(Clone)]
pub struct DebugSession {
    inner: Rc<Inner>,
}

impl DebugSession {
    /// Opens the engine's session. At most one may be open at a time.
    pub fn start(engine: &mut Engine, handler: Box<dyn SuspendHandler>) -> Result<DebugSession> {
        if engine.extension::<SessionMarker>().is_some() {
            return Err(Error::SessionActive);
        }
        let session = DebugSession {
            inner: Rc::new(Inner {
                state: RefCell::new(State {
                    breakpoints: Vec::new(),
                    next_id: 0,
                    mode: Mode::Run,
                    step_binding: None,
                    last_seq: 0,
                    include_internal: false,
                    load_binding: None,
                    hits: Vec::new(),
                }),
                handler: RefCell::new(Some(handler)),
            }),
        };
        let listener = Rc::new(Loader(Rc::downgrade(&session.inner)));
        let id = engine.attach_program_load_listener(SourceSectionFilter::any(), listener)?;
        session.inner.state.borrow_mut().load_binding = Some(id);
        engine.insert_extension(SessionMarker);
        Ok(session)
    }

    /// Removes every binding of the session and frees the engine for a new
    /// one.
    pub fn close(&self, engine: &mut Engine) {
        let mut st = self.inner.state.borrow_mut();
        for bp in st.breakpoints.drain(..) {
            if let Some(b) = bp.binding {
                engine.dispose(&b);
            }
        }
        if let Some(b) = st.step_binding.take() {
            engine.dispose(&b);
        }
        if let Some(id) = st.load_binding.take() {
            engine.dispose_id(id);
        }
        st.mode = Mode::Run;
        engine.remove_extension::<SessionMarker>();
    }

    pub fn include_internal(&self) -> bool {
        self.inner.state.borrow().include_internal
    }

    /// Shows frames of internal sources in stacks and scopes.
    pub fn set_include_internal(&self, include: bool) {
        self.inner.state.borrow_mut().include_internal = include;
    }

    pub fn set_breakpoint(
        &self,
        engine: &mut Engine,
        source: &str,
        line: usize,
        condition: Option<&str>,
    ) -> Result<BreakpointInfo> {
        if let Some(src) = engine.source(source).cloned() {
            // parse first so that resolution below sees the statements; a
            // syntax error leaves the breakpoint unresolved
            let _ = engine.load(&src);
        }
        let id = {
            let mut st = self.inner.state.borrow_mut();
            st.next_id += 1;
            let id = st.next_id;
            st.breakpoints.push(Breakpoint {
                info: BreakpointInfo {
                    id,
                    source: source.into(),
                    line,
                    condition: condition.map(String::from),
                    enabled: true,
                    status: BreakpointStatus::Pending,
                    hit_count: 0,
                    condition_error: None,
                },
                binding: None,
            });
            id
        };
        if engine.source(source).is_some() {
            self.resolve(engine, id)?;
        }
        Ok(self.breakpoint(id).expect("just added"))
    }

    /// Drops a breakpoint and its binding. Returns whether it existed.
    pub fn remove_breakpoint(&self, engine: &mut Engine, id: u32) -> bool {
        let removed = {
            let mut st = self.inner.state.borrow_mut();
            let Some(pos) = st.breakpoints.iter().position(|b| b.info.id == id) else {
                return false;
            };
            st.breakpoints.remove(pos)
        };
        if let Some(b) = removed.binding {
            engine.dispose(&b);
        }
        true
    }

    pub fn set_breakpoint_enabled(&self, engine: &mut Engine, id: u32, enabled: bool) -> Result<()> {
        let binding = {
            let mut st = self.inner.state.borrow_mut();
            let bp = st
                .breakpoints
                .iter_mut()
                .find(|b| b.info.id == id)
                .ok_or(Error::UnknownBinding(id))?;
            if bp.info.enabled == enabled {
                return Ok(());
            }
            bp.info.enabled = enabled;
            bp.binding.take()
        };
        match binding {
            Some(b) => engine.dispose(&b),
            None if enabled => self.attach(engine, id)?,
            None => {}
        }
        Ok(())
    }

    pub fn breakpoint(&self, id: u32) -> Option<BreakpointInfo> {
        let st = self.inner.state.borrow();
        st.breakpoints.iter().find(|b| b.info.id == id).map(|b| b.info.clone())
    }

    pub fn breakpoints(&self) -> Vec<BreakpointInfo> {
        self.inner
            .state
            .borrow()
            .breakpoints
            .iter()
            .map(|b| b.info.clone())
            .collect()
    }

    /// Suspends at the next statement that runs, e.g. the first statement of
    /// a program about to start.
    pub fn pause(&self, engine: &mut Engine) -> Result<()> {
        self.set_mode(engine, Mode::StepInto)
    }

    /// Forgets any stepping request, e.g. after a program ended mid-step.
    pub fn reset_stepping(&self, engine: &mut Engine) {
        let _ = self.set_mode(engine, Mode::Run);
    }

    pub fn is_stepping(&self) -> bool {
        self.inner.state.borrow().mode != Mode::Run
    }

    fn set_mode(&self, engine: &mut Engine, mode: Mode) -> Result<()> {
        let dispose = {
            let mut st = self.inner.state.borrow_mut();
            st.mode = mode;
            if mode == Mode::Run {
                st.step_binding.take()
            } else {
                None
            }
        };
        if let Some(b) = dispose {
            engine.dispose(&b);
        }
        if mode != Mode::Run && self.inner.state.borrow().step_binding.is_none() {
            let filter = SourceSectionFilter::builder().tag_is(Tag::Statement).build()?;
            let listener = Rc::new(Stepper(Rc::downgrade(&self.inner)));
            let b = engine.attach_listener(filter, listener)?;
            self.inner.state.borrow_mut().step_binding = Some(b);
        }
        Ok(())
    }

    /// First statement line at or after `line` in `source`.
    fn statement_line(engine: &Engine, source: &str, line: usize) -> Result<Option<usize>> {
        let filter = SourceSectionFilter::builder()
            .source_is(source)
            .tag_is(Tag::Statement)
            .start_line_in(line, usize::MAX)
            .build()?;
        let mut best: Option<usize> = None;
        for root in engine.roots_of(source) {
            for node in engine.matching_nodes(root, &filter) {
                if let Some(s) = engine.root(root).section_of(node) {
                    let l = s.start_line();
                    best = Some(best.map_or(l, |b: usize| b.min(l)));
                }
            }
        }
        Ok(best)
    }

    fn resolve(&self, engine: &mut Engine, id: u32) -> Result<()> {
        let (source, line) = {
            let st = self.inner.state.borrow();
            let bp = st
                .breakpoints
                .iter()
                .find(|b| b.info.id == id)
                .expect("known breakpoint");
            (bp.info.source.clone(), bp.info.line)
        };
        let status = match DebugSession::statement_line(engine, &source, line)? {
            Some(l) => BreakpointStatus::Resolved { line: l },
            None => BreakpointStatus::Unresolved,
        };
        let enabled = {
            let mut st = self.inner.state.borrow_mut();
            let bp = st
                .breakpoints
                .iter_mut()
                .find(|b| b.info.id == id)
                .expect("known breakpoint");
            bp.info.status = status;
            bp.info.enabled
        };
        if enabled {
            self.attach(engine, id)?;
        }
        Ok(())
    }

    fn attach(&self, engine: &mut Engine, id: u32) -> Result<()> {
        let (source, line, condition) = {
            let st = self.inner.state.borrow();
            let bp = st
                .breakpoints
                .iter()
                .find(|b| b.info.id == id)
                .expect("known breakpoint");
            let Some(line) = bp.info.resolved_line() else {
                return Ok(());
            };
            (bp.info.source.clone(), line, bp.info.condition.clone())
        };
        let filter = SourceSectionFilter::builder()
            .source_is(&source)
            .tag_is(Tag::Statement)
            .start_line_is(line)
            .build()?;
        let weak = Rc::downgrade(&self.inner);
        let binding = match condition {
            None => engine.attach_listener(filter, Rc::new(LineBreak { session: weak, id }))?,
            Some(text) => engine.attach_factory(
                filter,
                Rc::new(CondFactory {
                    session: weak,
                    id,
                    text,
                }),
            )?,
        };
        let mut st = self.inner.state.borrow_mut();
        if let Some(bp) = st.breakpoints.iter_mut().find(|b| b.info.id == id) {
            bp.binding = Some(binding);
        }
        Ok(())
    }

    fn note_condition_error(&self, id: u32, message: String) {
        let mut st = self.inner.state.borrow_mut();
        if let Some(bp) = st.breakpoints.iter_mut().find(|b| b.info.id == id) {
            bp.info.condition_error = Some(message);
        }
    }

    fn hit(&self, cx: &mut EventCx<'_>, id: u32) {
        {
            let mut st = self.inner.state.borrow_mut();
            if let Some(bp) = st.breakpoints.iter_mut().find(|b| b.info.id == id) {
                bp.info.hit_count += 1;
            }
            st.hits.push(id);
        }
        self.suspend(cx, false);
    }

    /// Suspends at the current enter event unless this event already
    /// suspended, the location is internal, or a handler is already running
    /// (evaluation during a suspension does not nest).
    fn suspend(&self, cx: &mut EventCx<'_>, stepping: bool) {
        if cx.context().is_internal() {
            return;
        }
        let Some(mut handler) = self.inner.handler.borrow_mut().take() else {
            self.inner.state.borrow_mut().hits.clear();
            return;
        };
        let seq = cx.enter_seq();
        let reason = {
            let mut st = self.inner.state.borrow_mut();
            if st.last_seq == seq {
                st.hits.clear();
                drop(st);
                *self.inner.handler.borrow_mut() = Some(handler);
                return;
            }
            st.last_seq = seq;
            let hits = core::mem::take(&mut st.hits);
            if hits.is_empty() && stepping {
                SuspendReason::Step
            } else {
                SuspendReason::Breakpoint(hits)
            }
        };
        let context = cx.context().clone();
        let depth = cx.stack_depth();
        let frames = self.frames(cx.engine(), &context);
        let mut suspension = Suspension {
            engine: cx.engine_mut(),
            session: self.clone(),
            reason,
            context,
            frames,
        };
        let action = handler.on_suspend(&mut suspension);
        *self.inner.handler.borrow_mut() = Some(handler);
        let mode = match action {
            ResumeAction::Continue | ResumeAction::Terminate => Mode::Run,
            ResumeAction::StepInto => Mode::StepInto,
            ResumeAction::StepOver => Mode::StepOver(depth),
            ResumeAction::StepOut => Mode::StepOut(depth),
        };
        if let Err(e) = self.set_mode(cx.engine_mut(), mode) {
            cx.engine_mut()
                .host_mut()
                .write_diagnostic(&alloc::format!("debugger: {e}"));
        }
        if action == ResumeAction::Terminate {
            cx.cancel("terminated by debugger");
        }
    }

    fn frames(&self, engine: &Engine, context: &EventContext) -> Vec<FrameSlot> {
        let include_internal = self.include_internal();
        let stack = engine.stack();
        let n = stack.len();
        let mut out = Vec::new();
        for i in 0..n {
            let entry = &stack[n - 1 - i];
            let (root, node) = if i == 0 {
                (context.root, context.node)
            } else {
                match stack[n - i].call_site {
                    Some(site) => site,
                    None => continue,
                }
            };
            let section = engine.root(root).section_of(node);
            let internal = section.as_ref().is_some_and(|s| s.source().is_internal());
            if internal && !include_internal {
                continue;
            }
            out.push(FrameSlot {
                info: StackFrameInfo {
                    name: String::from(&*engine.root(entry.root).name),
                    section,
                },
                root,
                node,
                frame: entry.frame.clone(),
            });
        }
        out
    }

    fn on_program_loaded(&self, engine: &mut Engine, source: &Rc<Source>) {
        let pending: Vec<u32> = {
            let st = self.inner.state.borrow();
            st.breakpoints
                .iter()
                .filter(|b| b.info.source == source.name() && b.info.status == BreakpointStatus::Pending)
                .map(|b| b.info.id)
                .collect()
        };
        for id in pending {
            if self.resolve(engine, id).is_err() {
                continue;
            }
            let Some(info) = self.breakpoint(id) else { continue };
            if let Some(handler) = self.inner.handler.borrow_mut().as_mut() {
                handler.on_breakpoint_resolved(&info);
            }
        }
    }
}

fn upgrade(weak: &Weak<Inner>) -> Option<DebugSession> {
    weak.upgrade().map(|inner| DebugSession { inner })
}

struct Loader(Weak<Inner>);

impl ProgramLoadListener for Loader {
    fn on_program_loaded(&self, engine: &mut Engine, source: &Rc<Source>) {
        if let Some(session) = upgrade(&self.0) {
            session.on_program_loaded(engine, source);
        }
    }
}

struct Stepper(Weak<Inner>);

impl ExecutionEventListener for Stepper {
    fn on_enter(&self, cx: &mut EventCx<'_>) -> ClientResult {
        let Some(session) = upgrade(&self.0) else { return Ok(()) };
        let mode = session.inner.state.borrow().mode;
        let depth = cx.stack_depth();
        let stop = match mode {
            Mode::Run => false,
            Mode::StepInto => true,
            Mode::StepOver(d) => depth <= d,
            Mode::StepOut(d) => depth < d,
        };
        if stop {
            session.suspend(cx, true);
        }
        Ok(())
    }

    fn interests(&self) -> EventMask {
        EventMask::ENTER
    }
}

struct LineBreak {
    session: Weak<Inner>,
    id: u32,
}

impl ExecutionEventListener for LineBreak {
    fn on_enter(&self, cx: &mut EventCx<'_>) -> ClientResult {
        if let Some(session) = upgrade(&self.session) {
            session.hit(cx, self.id);
        }
        Ok(())
    }

    fn interests(&self) -> EventMask {
        EventMask::ENTER
    }
}

/// Evaluates the condition in the breakpoint's frame and stops only when it
/// yields `true`. Anything else stops too and records a condition error.
struct CondBreak {
    session: Weak<Inner>,
    id: u32,
    fragment: core::result::Result<Fragment, String>,
}

impl ExecutionEventNode for CondBreak {
    fn on_enter(&self, cx: &mut EventCx<'_>) -> ClientResult {
        let Some(session) = upgrade(&self.session) else {
            return Ok(());
        };
        let failure = match &self.fragment {
            Ok(fragment) => match cx.execute_fragment(*fragment) {
                Ok(Value::Bool(true)) => None,
                Ok(Value::Bool(false)) => return Ok(()),
                Ok(other) => Some(alloc::format!("condition is not a boolean: {}", other.type_name())),
                Err(e) => Some(e.message),
            },
            Err(message) => Some(message.clone()),
        };
        if let Some(message) = failure {
            session.note_condition_error(self.id, message);
        }
        session.hit(cx, self.id);
        Ok(())
    }

    fn interests(&self) -> EventMask {
        EventMask::ENTER
    }
}

struct CondFactory {
    session: Weak<Inner>,
    id: u32,
    text: String,
}

impl ExecutionEventNodeFactory for CondFactory {
    fn create(&self, cx: &mut FactoryCx<'_>) -> core::result::Result<Option<Rc<dyn ExecutionEventNode>>, ClientError> {
        let fragment = cx.parse_inline(&self.text).map_err(|e| e.message);
        Ok(Some(Rc::new(CondBreak {
            session: self.session.clone(),
            id: self.id,
            fragment,
        })))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::host::BufferHost;
    use alloc::string::ToString;

    type Log = Rc<RefCell<Vec<String>>>;

    fn setup(text: &str) -> (Engine, RootId, BufferHost) {
        let host = BufferHost::new();
        let mut engine = Engine::new(Box::new(host.clone()));
        let src = engine.create_source("t.toy", "toylang", text, false).unwrap();
        let main = engine.load(&src).unwrap();
        (engine, main, host)
    }

    fn where_am_i(s: &Suspension<'_>) -> String {
        let top = &s.stack()[0];
        let (line, _) = top.position().unwrap();
        alloc::format!("{}:{}", top.name, line)
    }

    /// Handler that logs `name:line` and answers with the scripted actions,
    /// then continues.
    fn scripted(log: Log, mut actions: Vec<ResumeAction>) -> Box<dyn SuspendHandler> {
        actions.reverse();
        Box::new(move |s: &mut Suspension<'_>| {
            log.borrow_mut().push(where_am_i(s));
            actions.pop().unwrap_or(ResumeAction::Continue)
        })
    }

    fn var(s: &Suspension<'_>, name: &str) -> Value {
        s.scopes(0).unwrap()[0].get(name).unwrap().value.clone()
    }

    #[test]
    fn breakpoint_suspends_before_the_statement() {
        let (mut engine, main, _) = setup("x = 1\ny = x + 1\nz = y");
        let seen: Log = Default::default();
        let s2 = seen.clone();
        let session = DebugSession::start(
            &mut engine,
            Box::new(move |s: &mut Suspension<'_>| {
                s2.borrow_mut()
                    .push(alloc::format!("{} {:?} {:?}", where_am_i(s), var(s, "x"), var(s, "y")));
                ResumeAction::Continue
            }),
        )
        .unwrap();
        let bp = session.set_breakpoint(&mut engine, "t.toy", 2, None).unwrap();
        assert_eq!(bp.status, BreakpointStatus::Resolved { line: 2 });
        engine.execute_root(main, Vec::new()).unwrap();
        assert_eq!(*seen.borrow(), ["main:2 Int(1) Undefined"]);
        assert_eq!(session.breakpoint(bp.id).unwrap().hit_count, 1);
    }

    #[test]
    fn conditional_breakpoint_first_true_iteration() {
        let (mut engine, main, host) = setup("x = 0\nwhile x < 20 {\n  x = x + 1\n  print(x)\n}");
        let seen: Log = Default::default();
        let s2 = seen.clone();
        let session = DebugSession::start(
            &mut engine,
            Box::new(move |s: &mut Suspension<'_>| {
                s2.borrow_mut().push(s.eval(0, "x").unwrap().display);
                ResumeAction::Continue
            }),
        )
        .unwrap();
        session.set_breakpoint(&mut engine, "t.toy", 4, Some("x > 10")).unwrap();
        engine.execute_root(main, Vec::new()).unwrap();
        assert_eq!(seen.borrow()[0], "11");
        assert_eq!(seen.borrow().len(), 10);
        assert_eq!(host.output().lines().count(), 20);
    }

    #[test]
    fn false_condition_is_transparent() {
        let text = "x = 0\nwhile x < 5 {\n  x = x + 1\n}\nprint(x)";
        let (mut plain, main, plain_host) = setup(text);
        plain.execute_root(main, Vec::new()).unwrap();
        let (mut engine, main, host) = setup(text);
        let log: Log = Default::default();
        let session = DebugSession::start(&mut engine, scripted(log.clone(), Vec::new())).unwrap();
        session.set_breakpoint(&mut engine, "t.toy", 3, Some("x < 0")).unwrap();
        engine.execute_root(main, Vec::new()).unwrap();
        assert!(log.borrow().is_empty());
        assert_eq!(host.output(), plain_host.output());
    }

    #[test]
    fn non_boolean_condition_breaks_and_reports() {
        let (mut engine, main, _) = setup("x = 1\ny = 2");
        let log: Log = Default::default();
        let session = DebugSession::start(&mut engine, scripted(log.clone(), Vec::new())).unwrap();
        let bp = session.set_breakpoint(&mut engine, "t.toy", 2, Some("x + 1")).unwrap();
        let bad = session.set_breakpoint(&mut engine, "t.toy", 1, Some("x +")).unwrap();
        engine.execute_root(main, Vec::new()).unwrap();
        assert_eq!(*log.borrow(), ["main:1", "main:2"]);
        let info = session.breakpoint(bp.id).unwrap();
        assert_eq!(info.condition_error.as_deref(), Some("condition is not a boolean: Int"));
        assert!(session.breakpoint(bad.id).unwrap().condition_error.is_some());
    }

    #[test]
    fn resolution_moves_to_the_next_statement_line() {
        let (mut engine, _, _) = setup("x = 1\n\n# note\ny = 2\n");
        let session = DebugSession::start(&mut engine, scripted(Default::default(), Vec::new())).unwrap();
        let bp = session.set_breakpoint(&mut engine, "t.toy", 2, None).unwrap();
        assert_eq!(bp.status, BreakpointStatus::Resolved { line: 4 });
        let none = session.set_breakpoint(&mut engine, "t.toy", 5, None).unwrap();
        assert_eq!(none.status, BreakpointStatus::Unresolved);
    }

    #[test]
    fn deferred_breakpoints_resolve_on_load() {
        let mut engine = Engine::new(Box::new(BufferHost::new()));
        let log: Log = Default::default();
        let resolved: Log = Default::default();
        struct H(Log, Log);
        impl SuspendHandler for H {
            fn on_suspend(&mut self, s: &mut Suspension<'_>) -> ResumeAction {
                self.0.borrow_mut().push(where_am_i(s));
                ResumeAction::Continue
            }
            fn on_breakpoint_resolved(&mut self, bp: &BreakpointInfo) {
                self.1
                    .borrow_mut()
                    .push(alloc::format!("{} {:?}", bp.id, bp.resolved_line()));
            }
        }
        let session = DebugSession::start(&mut engine, Box::new(H(log.clone(), resolved.clone()))).unwrap();
        let bp = session.set_breakpoint(&mut engine, "later.toy", 2, None).unwrap();
        assert_eq!(bp.status, BreakpointStatus::Pending);
        engine.eval_source("later.toy", "toylang", "a = 1\nb = 2").unwrap();
        assert_eq!(*resolved.borrow(), ["1 Some(2)"]);
        assert_eq!(*log.borrow(), ["main:2"]);
    }

    const CALLS: &str = "fn f(a) {\n  b = a + 1\n  return b\n}\nx = f(1)\ny = x\nz = f(y)";

    #[test]
    fn step_into_visits_every_statement() {
        let (mut engine, main, _) = setup(CALLS);
        let log: Log = Default::default();
        let session = DebugSession::start(
            &mut engine,
            scripted(log.clone(), alloc::vec![ResumeAction::StepInto; 20]),
        )
        .unwrap();
        session.pause(&mut engine).unwrap();
        engine.execute_root(main, Vec::new()).unwrap();
        assert_eq!(
            *log.borrow(),
            ["main:1", "main:5", "f:2", "f:3", "main:6", "main:7", "f:2", "f:3"]
        );
    }

    #[test]
    fn step_over_and_out() {
        let (mut engine, main, _) = setup(CALLS);
        let log: Log = Default::default();
        let actions = alloc::vec![
            ResumeAction::StepOver, // main:1 -> main:5
            ResumeAction::StepOver, // main:5 -> main:6
            ResumeAction::StepInto, // main:6 -> main:7
            ResumeAction::StepInto, // main:7 -> f:2
            ResumeAction::StepOut,  // f:2 -> runs to the end
        ];
        let session = DebugSession::start(&mut engine, scripted(log.clone(), actions)).unwrap();
        session.pause(&mut engine).unwrap();
        engine.execute_root(main, Vec::new()).unwrap();
        assert_eq!(*log.borrow(), ["main:1", "main:5", "main:6", "main:7", "f:2"]);
    }

    #[test]
    fn step_out_returns_to_the_caller() {
        let (mut engine, main, _) = setup("fn f() {\n  a = 1\n  b = 2\n}\nf()\nc = 3");
        let log: Log = Default::default();
        let session =
            DebugSession::start(&mut engine, scripted(log.clone(), alloc::vec![ResumeAction::StepOut])).unwrap();
        session.set_breakpoint(&mut engine, "t.toy", 2, None).unwrap();
        engine.execute_root(main, Vec::new()).unwrap();
        assert_eq!(*log.borrow(), ["f:2", "main:6"]);
    }

    #[test]
    fn stack_scopes_and_assignment() {
        let (mut engine, main, host) = setup("g = 10\nfn f(a) {\n  b = a * 2\n  return b\n}\nprint(f(3))");
        let seen: Log = Default::default();
        let s2 = seen.clone();
        let session = DebugSession::start(
            &mut engine,
            Box::new(move |s: &mut Suspension<'_>| {
                let stack: Vec<String> = s
                    .stack()
                    .iter()
                    .map(|f| alloc::format!("{}@{:?}", f.name, f.position().unwrap()))
                    .collect();
                s2.borrow_mut().push(stack.join(" "));
                let scopes = s.scopes(0).unwrap();
                let names: Vec<&str> = scopes.iter().map(|sc| sc.name.as_str()).collect();
                s2.borrow_mut().push(names.join(","));
                assert_eq!(s.eval(1, "g").unwrap().display, "10");
                assert_eq!(s.eval(0, "b = 5").unwrap().display, "5");
                assert_eq!(var(s, "b"), Value::Int(5));
                let err = s.eval(0, "nosuchvar").unwrap_err();
                s2.borrow_mut().push(err.to_string());
                ResumeAction::Continue
            }),
        )
        .unwrap();
        session.set_breakpoint(&mut engine, "t.toy", 4, None).unwrap();
        engine.execute_root(main, Vec::new()).unwrap();
        let seen = seen.borrow();
        assert_eq!(seen[0], "f@(4, 3) main@(6, 7)");
        assert_eq!(seen[1], "f,global");
        assert!(seen[2].contains("nosuchvar"), "{}", seen[2]);
        assert_eq!(host.output(), "5\n");
    }

    #[test]
    fn remove_and_disable_restore_the_tree() {
        let (mut engine, main, _) = setup("x = 1\ny = 2");
        let before = engine.root(main).node_count();
        let log: Log = Default::default();
        let session = DebugSession::start(&mut engine, scripted(log.clone(), Vec::new())).unwrap();
        let a = session.set_breakpoint(&mut engine, "t.toy", 1, None).unwrap();
        let b = session.set_breakpoint(&mut engine, "t.toy", 2, None).unwrap();
        session.set_breakpoint_enabled(&mut engine, b.id, false).unwrap();
        engine.execute_root(main, Vec::new()).unwrap();
        assert_eq!(*log.borrow(), ["main:1"]);
        assert!(session.remove_breakpoint(&mut engine, a.id));
        engine.force_lazy_checks();
        assert_eq!(engine.root(main).node_count(), before);
        session.set_breakpoint_enabled(&mut engine, b.id, true).unwrap();
        engine.execute_root(main, Vec::new()).unwrap();
        assert_eq!(*log.borrow(), ["main:1", "main:2"]);
    }

    #[test]
    fn one_session_per_engine_and_terminate() {
        let (mut engine, main, host) = setup("print(1)\nprint(2)");
        let session =
            DebugSession::start(&mut engine, Box::new(|_: &mut Suspension<'_>| ResumeAction::Terminate)).unwrap();
        assert!(matches!(
            DebugSession::start(&mut engine, scripted(Default::default(), Vec::new())),
            Err(Error::SessionActive)
        ));
        session.set_breakpoint(&mut engine, "t.toy", 2, None).unwrap();
        let Err(Error::Guest(e)) = engine.execute_root(main, Vec::new()) else {
            panic!()
        };
        assert_eq!(e.kind, crate::exception::ExceptionKind::Cancelled);
        assert_eq!(host.output(), "1\n");
        session.close(&mut engine);
        assert!(DebugSession::start(&mut engine, scripted(Default::default(), Vec::new())).is_ok());
    }

    #[test]
    fn internal_code_never_suspends() {
        let (mut engine, main, _) = setup("a = abs(-1)\nb = 2");
        let log: Log = Default::default();
        let session = DebugSession::start(
            &mut engine,
            scripted(log.clone(), alloc::vec![ResumeAction::StepInto; 5]),
        )
        .unwrap();
        session.pause(&mut engine).unwrap();
        engine.execute_root(main, Vec::new()).unwrap();
        assert_eq!(*log.borrow(), ["main:1", "main:2"]);
    }
}
