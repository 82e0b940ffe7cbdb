//! The engine: source registry, frontends, executable roots and the
//! tree-walking evaluator with node specialization.

use alloc::boxed::Box;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::any::Any;
use core::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};
use crate::exception::{ExceptionKind, GuestException, RawError, StackTraceEntry};
use crate::frame::{Frame, FrameRef, Scope, ScopeVariable};
use crate::host::{CommandSource, Host, PanicGuard};
use crate::instrument::{BindingState, LoadBinding};
use crate::lang::{minicalc::MiniCalc, toylang::Toylang};
use crate::node::{
    BinOp, Node, NodeId, NodeKind, NodeState, RootId, RootNode, Tier, UnOp, Variant, NO_SLOT, REWRITE_LIMIT,
};
use crate::source::{Source, SourceSection};
use crate::spi::{InlineCx, LanguageFrontend, ParseCx};
use crate::value::{Function, Native, Value};

/// Deepest permitted guest call nesting.
pub const MAX_CALL_DEPTH: usize = 10_000;

/// Non-local exits out of [`Engine::exec`].
pub(crate) enum Unwind {
    Return(Value),
    Error(Box<GuestException>),
}

type Exec = core::result::Result<Value, Unwind>;

impl From<Box<GuestException>> for Unwind {
    fn from(e: Box<GuestException>) -> Self {
        Unwind::Error(e)
    }
}

/// One active guest activation.
#[derive(Clone, Debug)]
pub struct StackEntry {
    pub root: RootId,
    pub frame: FrameRef,
    /// Node of the caller that made this call; `None` for top-level programs.
    pub call_site: Option<(RootId, NodeId)>,
}

/// An injected guest fragment: a detached holder inside a root's arena.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fragment {
    pub root: RootId,
    pub holder: NodeId,
}

struct Program {
    source: Rc<Source>,
    main: RootId,
    roots: core::ops::Range<u32>,
}

pub struct Engine {
    pub(crate) host: Box<dyn Host>,
    pub(crate) sources: Vec<Rc<Source>>,
    frontends: Vec<Rc<dyn LanguageFrontend>>,
    pub(crate) roots: Vec<RootNode>,
    root_frontend: Vec<u32>,
    programs: Vec<Program>,
    pub(crate) bindings: Vec<Rc<BindingState>>,
    pub(crate) load_bindings: Vec<LoadBinding>,
    pub(crate) next_binding: u32,
    pub(crate) stack: Vec<StackEntry>,
    pub(crate) enter_seq: u64,
    pub(crate) cancel: Option<String>,
    pub(crate) closed: bool,
    executing: bool,
    pub(crate) client_errors: usize,
    pub(crate) panic_guard: Option<PanicGuard>,
    commands: Option<Box<dyn CommandSource>>,
    interrupt: Option<Arc<AtomicBool>>,
    builtin_names: Vec<Rc<str>>,
    builtin_values: Vec<Value>,
    globals: Option<(RootId, FrameRef)>,
    extensions: Vec<Box<dyn Any>>,
}

const PRELUDE_NAME: &str = "builtins.toy";
const PRELUDE: &str = include_str!("lang/toylang/builtins.toy");
const PRELUDE_FUNCTIONS: [&str; 3] = ["abs", "max", "min"];

impl Engine {
    /// Engine with the toylang and minicalc frontends and the toylang
    /// prelude loaded.
    pub fn new(host: Box<dyn Host>) -> Engine {
        let mut engine = Engine::bare(host);
        engine.register_frontend(Rc::new(Toylang));
        engine.register_frontend(Rc::new(MiniCalc));
        engine.load_prelude();
        engine
    }

    /// Engine without frontends; register them with
    /// [`Engine::register_frontend`].
    pub fn bare(host: Box<dyn Host>) -> Engine {
        let mut builtin_names: Vec<Rc<str>> = Native::ALL.iter().map(|n| Rc::from(n.name())).collect();
        let mut builtin_values: Vec<Value> = Native::ALL
            .iter()
            .map(|&n| Value::Function(Rc::new(Function::Native(n))))
            .collect();
        for name in PRELUDE_FUNCTIONS {
            builtin_names.push(Rc::from(name));
            builtin_values.push(Value::Undefined);
        }
        Engine {
            host,
            sources: Vec::new(),
            frontends: Vec::new(),
            roots: Vec::new(),
            root_frontend: Vec::new(),
            programs: Vec::new(),
            bindings: Vec::new(),
            load_bindings: Vec::new(),
            next_binding: 0,
            stack: Vec::new(),
            enter_seq: 0,
            cancel: None,
            closed: false,
            executing: false,
            client_errors: 0,
            panic_guard: None,
            commands: None,
            interrupt: None,
            builtin_names,
            builtin_values,
            globals: None,
            extensions: Vec::new(),
        }
    }

    fn load_prelude(&mut self) {
        let source = self
            .create_source(PRELUDE_NAME, "toylang", PRELUDE, true)
            .expect("prelude source registers");
        let main = self.load(&source).expect("prelude parses");
        let saved = self.globals.take();
        self.execute_root(main, Vec::new()).expect("prelude runs");
        let (_, frame) = self.globals.take().expect("prelude frame");
        self.globals = saved;
        let root = &self.roots[main.index()];
        for (i, name) in self.builtin_names.iter().enumerate() {
            if let Some(slot) = root.slots.iter().position(|s| s.name == *name) {
                self.builtin_values[i] = frame.get(slot);
            }
        }
    }

    pub fn register_frontend(&mut self, frontend: Rc<dyn LanguageFrontend>) {
        self.frontends.retain(|f| f.language_id() != frontend.language_id());
        self.frontends.push(frontend);
    }

    pub fn frontend(&self, language_id: &str) -> Option<Rc<dyn LanguageFrontend>> {
        self.frontends.iter().find(|f| f.language_id() == language_id).cloned()
    }

    pub fn frontend_of(&self, root: RootId) -> Rc<dyn LanguageFrontend> {
        self.frontends[self.root_frontend[root.index()] as usize].clone()
    }

    pub fn language_ids(&self) -> Vec<String> {
        self.frontends.iter().map(|f| f.language_id().into()).collect()
    }

    pub fn host_mut(&mut self) -> &mut dyn Host {
        &mut *self.host
    }

    pub fn host(&self) -> &dyn Host {
        &*self.host
    }

    pub fn set_panic_guard(&mut self, guard: Option<PanicGuard>) {
        self.panic_guard = guard;
    }

    /// Installs the queue drained at safepoints. Producers set `pending`
    /// after enqueueing so that the evaluator only drains when needed.
    pub fn set_command_source(&mut self, source: Box<dyn CommandSource>, pending: Arc<AtomicBool>) {
        self.commands = Some(source);
        self.interrupt = Some(pending);
    }

    /// Applies queued commands now (also done automatically at safepoints).
    pub fn poll_commands(&mut self) {
        if let Some(flag) = &self.interrupt {
            flag.store(false, Ordering::Release);
        }
        let Some(mut source) = self.commands.take() else { return };
        loop {
            let batch = source.drain();
            if batch.is_empty() {
                break;
            }
            for command in batch {
                command(self);
            }
        }
        if self.commands.is_none() {
            self.commands = Some(source);
        }
    }

    /// Applies flagged commands and a pending cancellation.
    #[inline]
    fn safepoint(&mut self, root: RootId, node: NodeId) -> core::result::Result<(), Unwind> {
        if let Some(flag) = &self.interrupt {
            if flag.load(Ordering::Acquire) {
                self.poll_commands();
            }
        }
        if let Some(reason) = self.cancel.take() {
            return Err(Unwind::Error(crate::instrument::cancelled_exception(
                self, root, node, &reason,
            )));
        }
        Ok(())
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn is_executing(&self) -> bool {
        self.executing
    }

    /// Cancels the running program at its next safepoint, typically from a
    /// queued [`Command`](crate::host::Command).
    pub fn cancel(&mut self, reason: &str) {
        if self.executing && self.cancel.is_none() {
            self.cancel = Some(reason.into());
        }
    }

    // ---- extensions -----------------------------------------------------

    /// Stores tool state keyed by type, replacing a previous value.
    pub fn insert_extension<T: Any>(&mut self, value: T) {
        self.extensions.retain(|e| !e.is::<T>());
        self.extensions.push(Box::new(value));
    }

    pub fn extension<T: Any>(&self) -> Option<&T> {
        self.extensions.iter().find_map(|e| e.downcast_ref::<T>())
    }

    pub fn remove_extension<T: Any>(&mut self) -> Option<T> {
        let pos = self.extensions.iter().position(|e| e.is::<T>())?;
        self.extensions.remove(pos).downcast::<T>().ok().map(|b| *b)
    }

    // ---- sources and roots ----------------------------------------------

    /// Registers a source and notifies source-load listeners.
    pub fn create_source(&mut self, name: &str, language_id: &str, text: &str, internal: bool) -> Result<Rc<Source>> {
        if self.closed {
            return Err(Error::EngineClosed);
        }
        if self.frontend(language_id).is_none() {
            return Err(Error::UnknownLanguage(language_id.into()));
        }
        if self.sources.iter().any(|s| s.name() == name) {
            return Err(Error::DuplicateSource(name.into()));
        }
        let source = Source::new(name, language_id, text, internal)?;
        self.sources.push(source.clone());
        self.notify_source_loaded(&source);
        Ok(source)
    }

    pub fn sources(&self) -> &[Rc<Source>] {
        &self.sources
    }

    pub fn source(&self, name: &str) -> Option<&Rc<Source>> {
        self.sources.iter().find(|s| s.name() == name)
    }

    /// Parses a registered source (once) and returns its top-level root.
    pub fn load(&mut self, source: &Rc<Source>) -> Result<RootId> {
        if self.closed {
            return Err(Error::EngineClosed);
        }
        if let Some(p) = self.programs.iter().find(|p| Rc::ptr_eq(&p.source, source)) {
            return Ok(p.main);
        }
        if !self.sources.iter().any(|s| Rc::ptr_eq(s, source)) {
            return Err(Error::UnknownSource(source.name().into()));
        }
        let fe_index = self
            .frontends
            .iter()
            .position(|f| f.language_id() == source.language_id())
            .ok_or_else(|| Error::UnknownLanguage(source.language_id().into()))?;
        let frontend = self.frontends[fe_index].clone();
        let first = RootId(self.roots.len() as u32);
        let parsed = frontend.parse(
            source,
            &ParseCx {
                first_root: first,
                builtins: &self.builtin_names,
            },
        )?;
        let end = first.0 + parsed.len() as u32;
        for (i, mut root) in parsed.into_iter().enumerate() {
            debug_assert_eq!(root.id.0, first.0 + i as u32);
            frontend.mark_internal(&mut root);
            self.roots.push(root);
            self.root_frontend.push(fe_index as u32);
        }
        self.programs.push(Program {
            source: source.clone(),
            main: first,
            roots: first.0..end,
        });
        for r in first.0..end {
            self.on_ast_loaded(RootId(r));
        }
        self.notify_program_loaded(source);
        Ok(first)
    }

    /// Registers, parses and runs a program.
    pub fn eval_source(&mut self, name: &str, language_id: &str, text: &str) -> Result<Value> {
        let source = self.create_source(name, language_id, text, false)?;
        let main = self.load(&source)?;
        self.execute_root(main, Vec::new())
    }

    pub fn root(&self, id: RootId) -> &RootNode {
        &self.roots[id.index()]
    }

    /// Direct tree access for tests and tools. Structural edits must keep the
    /// parent links consistent.
    pub fn root_mut(&mut self, id: RootId) -> &mut RootNode {
        &mut self.roots[id.index()]
    }

    pub fn root_count(&self) -> usize {
        self.roots.len()
    }

    pub fn root_ids(&self) -> impl Iterator<Item = RootId> {
        (0..self.roots.len() as u32).map(RootId)
    }

    /// Top-level root of a loaded source.
    pub fn program_root(&self, source_name: &str) -> Option<RootId> {
        self.programs
            .iter()
            .find(|p| p.source.name() == source_name)
            .map(|p| p.main)
    }

    /// Every root parsed from a source.
    pub fn roots_of(&self, source_name: &str) -> Vec<RootId> {
        self.programs
            .iter()
            .find(|p| p.source.name() == source_name)
            .map(|p| p.roots.clone().map(RootId).collect())
            .unwrap_or_default()
    }

    /// Live node count over all roots of a source.
    pub fn node_count_of(&self, source_name: &str) -> usize {
        self.roots_of(source_name)
            .into_iter()
            .map(|r| self.roots[r.index()].node_count())
            .sum()
    }

    pub fn builtin_names(&self) -> &[Rc<str>] {
        &self.builtin_names
    }

    pub fn display_value(&self, language_id: &str, value: &Value) -> String {
        match self.frontend(language_id) {
            Some(f) => f.to_display_string(value),
            None => alloc::format!("{value:?}"),
        }
    }

    pub fn stack(&self) -> &[StackEntry] {
        &self.stack
    }

    // ---- execution ------------------------------------------------------

    /// Runs a root as a top-level program (fresh frame, no captured parent).
    pub fn execute_root(&mut self, root: RootId, arguments: Vec<Value>) -> Result<Value> {
        if self.closed {
            return Err(Error::EngineClosed);
        }
        if self.executing {
            return Err(Error::Reentrancy);
        }
        let slots = self.roots[root.index()].slots.len();
        let frame = Frame::new(root, slots, arguments, None);
        if self.roots[root.index()].lexical_parent.is_none() {
            self.globals = Some((root, frame.clone()));
        }
        self.executing = true;
        self.cancel = None;
        self.stack.push(StackEntry {
            root,
            frame: frame.clone(),
            call_site: None,
        });
        let mut outcome: Option<Exec> = None;
        match self.panic_guard {
            None => outcome = Some(self.exec_body(root, &frame)),
            Some(guard) => {
                let mut run = || outcome = Some(self.exec_body(root, &frame));
                if let Err(panic) = guard(&mut run) {
                    outcome = None;
                    let lang = self.roots[root.index()].language_id.clone();
                    let e = GuestException::new(ExceptionKind::Internal, panic, &lang);
                    outcome.replace(Err(Unwind::Error(Box::new(e))));
                }
            }
        }
        self.stack.clear();
        self.executing = false;
        self.cancel = None;
        match outcome.expect("execution produced an outcome") {
            Ok(v) | Err(Unwind::Return(v)) => Ok(v),
            Err(Unwind::Error(e)) => Err(Error::Guest(e)),
        }
    }

    fn exec_body(&mut self, root: RootId, frame: &FrameRef) -> Exec {
        let body = self.roots[root.index()].body();
        self.exec(root, body, frame)
    }

    /// Translates `text` at `node` of `root` into a detached fragment.
    pub fn parse_inline(
        &mut self,
        root: RootId,
        node: NodeId,
        text: &str,
    ) -> core::result::Result<Fragment, GuestException> {
        let frontend = self.frontend_of(root);
        let mut enclosing = Vec::new();
        let mut parent = self.roots[root.index()].lexical_parent;
        while let Some(p) = parent {
            let r = &self.roots[p.index()];
            enclosing.push(r.slots.iter().map(|s| s.name.clone()).collect());
            parent = r.lexical_parent;
        }
        let mut cx = InlineCx {
            root: &mut self.roots[root.index()],
            node,
            enclosing,
            builtins: &self.builtin_names,
        };
        let holder = frontend.parse_inline(text, &mut cx)?;
        Ok(Fragment { root, holder })
    }

    /// Runs a fragment once against `frame`, which must belong to the
    /// fragment's root.
    pub fn execute_fragment(
        &mut self,
        fragment: Fragment,
        frame: &FrameRef,
    ) -> core::result::Result<Value, GuestException> {
        if frame.root() != fragment.root {
            let lang = self.roots[fragment.root.index()].language_id.clone();
            return Err(GuestException::new(
                ExceptionKind::Internal,
                "fragment executed against a frame of another root",
                &lang,
            ));
        }
        let body = match self.roots[fragment.root.index()].node(fragment.holder).kind {
            NodeKind::Holder { body } => body,
            _ => fragment.holder,
        };
        match self.exec(fragment.root, body, frame) {
            Ok(v) | Err(Unwind::Return(v)) => Ok(v),
            Err(Unwind::Error(e)) => Err(*e),
        }
    }

    /// Parses and evaluates `text` in `frame` at `node`.
    pub fn eval_in_frame(
        &mut self,
        root: RootId,
        node: NodeId,
        frame: &FrameRef,
        text: &str,
    ) -> core::result::Result<Value, GuestException> {
        let fragment = self.parse_inline(root, node, text)?;
        self.execute_fragment(fragment, frame)
    }

    /// Scopes visible at `node` in `frame`, innermost first.
    pub fn find_local_scopes(
        &self,
        root: RootId,
        node: NodeId,
        frame: &Frame,
        include_internal: bool,
    ) -> Result<Vec<Scope>> {
        let frontend = self.frontend_of(root);
        frontend.find_local_scopes(&self.roots[root.index()], node, frame, include_internal)
    }

    /// Global variables of the current (or last run) program, then builtins.
    pub fn find_top_scopes(&self, include_internal: bool) -> Vec<Scope> {
        let mut out = Vec::new();
        if let Some((root, frame)) = &self.globals {
            if let Ok(scope) = crate::spi::frame_scope(&self.roots[root.index()], frame, include_internal, "global") {
                out.push(scope);
            }
        }
        let variables = self
            .builtin_names
            .iter()
            .zip(&self.builtin_values)
            .filter(|(n, _)| include_internal || !n.starts_with('_'))
            .map(|(n, v)| ScopeVariable {
                name: String::from(&**n),
                value: v.clone(),
                writable: false,
                internal: n.starts_with('_'),
            })
            .collect();
        out.push(Scope {
            name: "builtins".into(),
            variables,
        });
        out
    }

    pub(crate) fn raise(&self, root: RootId, node: NodeId, raw: RawError) -> Box<GuestException> {
        let r = &self.roots[root.index()];
        let location = r.section_of(node);
        let mut e = self.frontend_of(root).wrap_exception(raw, location.clone());
        e.guest_stack = self.guest_stack(root, location);
        Box::new(e)
    }

    fn guest_stack(&self, root: RootId, location: Option<SourceSection>) -> Vec<StackTraceEntry> {
        let mut out = Vec::new();
        let mut current = (root, location);
        for entry in self.stack.iter().rev() {
            out.push(StackTraceEntry {
                root_name: String::from(&*self.roots[current.0.index()].name),
                section: current.1.clone(),
            });
            match entry.call_site {
                Some((r, n)) => current = (r, self.roots[r.index()].section_of(n)),
                None => break,
            }
        }
        if out.is_empty() {
            out.push(StackTraceEntry {
                root_name: String::from(&*self.roots[current.0.index()].name),
                section: current.1,
            });
        }
        out
    }

    // ---- evaluator ------------------------------------------------------

    pub(crate) fn exec(&mut self, r: RootId, n: NodeId, f: &FrameRef) -> Exec {
        let kind = self.roots[r.index()].nodes[n.index()].kind;
        match kind {
            NodeKind::Int(i) => Ok(Value::Int(i)),
            NodeKind::Float(x) => Ok(Value::Float(x)),
            NodeKind::Bool(b) => Ok(Value::Bool(b)),
            NodeKind::Null => Ok(Value::Null),
            NodeKind::Str(i) => Ok(self.roots[r.index()].consts[i as usize].clone()),
            NodeKind::Local { slot } => match f.get(slot as usize) {
                Value::Undefined => Err(self.undefined_slot(r, n, 0, slot).into()),
                v => Ok(v),
            },
            NodeKind::Outer { depth, slot } => {
                let v = f
                    .ancestor(depth)
                    .map(|a| a.get(slot as usize))
                    .unwrap_or(Value::Undefined);
                match v {
                    Value::Undefined => Err(self.undefined_slot(r, n, depth, slot).into()),
                    v => Ok(v),
                }
            }
            NodeKind::Builtin { index } => match &self.builtin_values[index as usize] {
                Value::Undefined => {
                    let name = String::from(&*self.builtin_names[index as usize]);
                    Err(self.raise(r, n, RawError::UndefinedVariable(name)).into())
                }
                v => Ok(v.clone()),
            },
            NodeKind::ByName { name } => self.read_by_name(r, n, name, f),
            NodeKind::SetLocal { slot, value } => {
                let v = self.exec(r, value, f)?;
                f.set(slot as usize, v.clone());
                Ok(v)
            }
            NodeKind::SetOuter { depth, slot, value } => {
                let v = self.exec(r, value, f)?;
                match f.ancestor(depth) {
                    Some(a) => a.set(slot as usize, v.clone()),
                    None => {
                        return Err(self
                            .raise(r, n, RawError::Internal("missing enclosing frame".into()))
                            .into())
                    }
                }
                Ok(v)
            }
            NodeKind::SetByName { name, value } => {
                let v = self.exec(r, value, f)?;
                self.write_by_name(r, n, name, f, v.clone())?;
                Ok(v)
            }
            NodeKind::Binary { op, lhs, rhs, spill } => {
                let a = self.exec(r, lhs, f)?;
                if spill != NO_SLOT {
                    f.set(spill as usize, a.clone());
                }
                let b = self.exec(r, rhs, f)?;
                self.binary(r, n, op, a, b)
            }
            NodeKind::Unary { op, operand } => {
                let v = self.exec(r, operand, f)?;
                self.unary(r, n, op, v)
            }
            NodeKind::And { lhs, rhs } => {
                if !self.exec_bool(r, lhs, n, f, "&&")? {
                    return Ok(Value::Bool(false));
                }
                Ok(Value::Bool(self.exec_bool(r, rhs, n, f, "&&")?))
            }
            NodeKind::Or { lhs, rhs } => {
                if self.exec_bool(r, lhs, n, f, "||")? {
                    return Ok(Value::Bool(true));
                }
                Ok(Value::Bool(self.exec_bool(r, rhs, n, f, "||")?))
            }
            NodeKind::Call { callee, args } => self.exec_call(r, n, callee, args, f),
            NodeKind::Closure { root } => {
                let target = &self.roots[root.index()];
                Ok(Value::Function(Rc::new(Function::Closure {
                    root,
                    name: target.name.clone(),
                    arity: target.arity,
                    captured: Some(f.clone()),
                })))
            }
            NodeKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                if self.exec_bool(r, cond, n, f, "if")? {
                    self.exec(r, then_branch, f)?;
                } else if let Some(e) = else_branch {
                    self.exec(r, e, f)?;
                }
                Ok(Value::Null)
            }
            NodeKind::While { .. } => self.exec_while(r, n, f),
            NodeKind::Block { stmts } => {
                for i in 0..stmts.len {
                    let s = self.roots[r.index()].lists[(stmts.start + i) as usize];
                    self.safepoint(r, s)?;
                    self.exec(r, s, f)?;
                }
                Ok(Value::Null)
            }
            NodeKind::Return { value } => {
                let v = match value {
                    Some(v) => self.exec(r, v, f)?,
                    None => Value::Null,
                };
                Err(Unwind::Return(v))
            }
            NodeKind::ExprStmt { expr } => self.exec(r, expr, f),
            NodeKind::Echo { expr } => {
                let v = self.exec(r, expr, f)?;
                let mut text = self.frontend_of(r).to_display_string(&v);
                text.push('\n');
                self.host.write_output(&text);
                Ok(v)
            }
            NodeKind::Holder { body } => self.exec(r, body, f),
            NodeKind::Wrapper { probe, .. } => self.exec_wrapper(r, n, probe, f),
            NodeKind::InputTap { delegate, probe, index } => {
                let v = self.exec(r, delegate, f)?;
                let p = &self.roots[r.index()].probes[probe.0 as usize];
                if !p.removed {
                    let chain = p.chain.clone();
                    let context = p.context.clone();
                    self.dispatch_input(&chain, &context, f, index as usize, &v);
                }
                Ok(v)
            }
        }
    }

    #[inline(never)]
    fn exec_wrapper(&mut self, r: RootId, wrapper: NodeId, probe: crate::node::ProbeId, f: &FrameRef) -> Exec {
        let pi = probe.0 as usize;
        if !self.roots[r.index()].probes[pi].is_valid() {
            self.check_subscriptions(r, probe, Some(f));
        }
        let p = &self.roots[r.index()].probes[pi];
        let delegate = p.delegate;
        if p.removed || p.wrapper != wrapper {
            return self.exec(r, delegate, f);
        }
        let chain = p.chain.clone();
        let context = p.context.clone();
        self.enter_seq += 1;
        self.dispatch_enter(&chain, &context, f);
        if let Some(reason) = self.cancel.take() {
            let e = crate::instrument::cancelled_exception(self, r, delegate, &reason);
            self.dispatch_exceptional(&chain, &context, f, &e);
            return Err(Unwind::Error(e));
        }
        let result = self.exec(r, delegate, f);
        match &result {
            Ok(v) | Err(Unwind::Return(v)) => self.dispatch_return(&chain, &context, f, v),
            Err(Unwind::Error(e)) => self.dispatch_exceptional(&chain, &context, f, e),
        }
        result
    }

    #[inline(never)]
    fn exec_while(&mut self, r: RootId, n: NodeId, f: &FrameRef) -> Exec {
        loop {
            // the child slots may be re-pointed by probe insertion or removal
            let NodeKind::While { cond, body } = self.roots[r.index()].nodes[n.index()].kind else {
                unreachable!("while node changed kind")
            };
            if !self.exec_bool(r, cond, n, f, "while")? {
                return Ok(Value::Null);
            }
            self.exec(r, body, f)?;
            self.safepoint(r, n)?;
        }
    }

    fn exec_bool(
        &mut self,
        r: RootId,
        child: NodeId,
        at: NodeId,
        f: &FrameRef,
        what: &str,
    ) -> core::result::Result<bool, Unwind> {
        match self.exec(r, child, f)? {
            Value::Bool(b) => Ok(b),
            other => Err(self
                .raise(
                    r,
                    at,
                    RawError::Type(alloc::format!("`{what}` expects Bool, got {}", other.type_name())),
                )
                .into()),
        }
    }

    fn undefined_slot(&self, r: RootId, n: NodeId, depth: u32, slot: u32) -> Box<GuestException> {
        let mut root = r;
        for _ in 0..depth {
            root = self.roots[root.index()].lexical_parent.unwrap_or(root);
        }
        let name = self.roots[root.index()]
            .slots
            .get(slot as usize)
            .map(|s| String::from(&*s.name))
            .unwrap_or_default();
        self.raise(r, n, RawError::UndefinedVariable(name))
    }

    fn const_name(&self, r: RootId, index: u32) -> Rc<str> {
        match &self.roots[r.index()].consts[index as usize] {
            Value::Str(s) => s.clone(),
            _ => Rc::from(""),
        }
    }

    fn read_by_name(&self, r: RootId, n: NodeId, name: u32, f: &FrameRef) -> Exec {
        let name = self.const_name(r, name);
        let mut frame = Some(f);
        while let Some(fr) = frame {
            let root = &self.roots[fr.root().index()];
            if let Some(slot) = root.slots.iter().position(|s| s.name == name) {
                if let v @ (Value::Int(_)
                | Value::Float(_)
                | Value::Bool(_)
                | Value::Str(_)
                | Value::Null
                | Value::Function(_)) = fr.get(slot)
                {
                    return Ok(v);
                }
            }
            frame = fr.parent();
        }
        if let Some(i) = self.builtin_names.iter().position(|b| *b == name) {
            if !matches!(self.builtin_values[i], Value::Undefined) {
                return Ok(self.builtin_values[i].clone());
            }
        }
        Err(self
            .raise(r, n, RawError::UndefinedVariable(String::from(&*name)))
            .into())
    }

    fn write_by_name(
        &self,
        r: RootId,
        n: NodeId,
        name: u32,
        f: &FrameRef,
        v: Value,
    ) -> core::result::Result<(), Unwind> {
        let name = self.const_name(r, name);
        let mut frame = Some(f);
        while let Some(fr) = frame {
            let root = &self.roots[fr.root().index()];
            if let Some(slot) = root.slots.iter().position(|s| s.name == name) {
                fr.set(slot, v);
                return Ok(());
            }
            frame = fr.parent();
        }
        Err(self
            .raise(r, n, RawError::UndefinedVariable(String::from(&*name)))
            .into())
    }

    #[inline(never)]
    fn exec_call(&mut self, r: RootId, n: NodeId, callee: NodeId, args: crate::node::ListRef, f: &FrameRef) -> Exec {
        let target = self.exec(r, callee, f)?;
        let mut values = Vec::with_capacity(args.len as usize);
        for i in 0..args.len {
            let a = self.roots[r.index()].lists[(args.start + i) as usize];
            values.push(self.exec(r, a, f)?);
        }
        let Value::Function(func) = target else {
            return Err(self
                .raise(r, n, RawError::NotCallable(target.type_name().into()))
                .into());
        };
        if let Some(expected) = func.arity() {
            if expected != values.len() {
                let raw = RawError::Arity {
                    name: func.name().into(),
                    expected,
                    got: values.len(),
                };
                return Err(self.raise(r, n, raw).into());
            }
        }
        match &*func {
            Function::Native(native) => self.call_native(r, n, *native, values),
            Function::Closure { root, captured, .. } => {
                if self.stack.len() > MAX_CALL_DEPTH {
                    return Err(self.raise(r, n, RawError::StackOverflow).into());
                }
                let root = *root;
                let slots = self.roots[root.index()].slots.len();
                let frame = Frame::new(root, slots, values, captured.clone());
                self.stack.push(StackEntry {
                    root,
                    frame: frame.clone(),
                    call_site: Some((r, n)),
                });
                let result = self.exec_body(root, &frame);
                self.stack.pop();
                match result {
                    Ok(_) => Ok(Value::Null),
                    Err(Unwind::Return(v)) => Ok(v),
                    Err(e) => Err(e),
                }
            }
        }
    }

    fn call_native(&mut self, r: RootId, n: NodeId, native: Native, args: Vec<Value>) -> Exec {
        match native {
            Native::Print => {
                let frontend = self.frontend_of(r);
                let mut text = String::new();
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        text.push(' ');
                    }
                    text.push_str(&frontend.to_display_string(a));
                }
                text.push('\n');
                self.host.write_output(&text);
                Ok(Value::Null)
            }
            Native::Clock => Ok(Value::Float(self.host.clock_seconds())),
            Native::Exit => match args[0] {
                Value::Int(code) => Err(self.raise(r, n, RawError::Exit(code)).into()),
                ref other => Err(self
                    .raise(
                        r,
                        n,
                        RawError::Type(alloc::format!("`exit` expects Int, got {}", other.type_name())),
                    )
                    .into()),
            },
            Native::Str => Ok(Value::str(&self.frontend_of(r).to_display_string(&args[0]))),
            Native::Fault => Err(self
                .raise(r, n, RawError::Internal("deliberate interpreter fault".into()))
                .into()),
        }
    }

    // ---- specialization -------------------------------------------------

    fn binary(&mut self, r: RootId, n: NodeId, op: BinOp, a: Value, b: Value) -> Exec {
        let state = self.roots[r.index()].nodes[n.index()].state;
        match state.tier {
            Tier::Specialized(v) if operands_fit(v, &a, &b) => {}
            Tier::Generic => {}
            Tier::Uninitialized => {
                let next = match variant_of(&a, &b) {
                    Some(v) => Tier::Specialized(v),
                    None => Tier::Generic,
                };
                self.respecialize(r, n, next);
            }
            Tier::Specialized(_) => self.respecialize(r, n, Tier::Generic),
        }
        match generic_binary(op, &a, &b) {
            Ok(v) => Ok(v),
            Err(raw) => Err(self.raise(r, n, raw).into()),
        }
    }

    fn unary(&mut self, r: RootId, n: NodeId, op: UnOp, v: Value) -> Exec {
        match op {
            UnOp::Not => match v {
                Value::Bool(b) => Ok(Value::Bool(!b)),
                other => Err(self
                    .raise(
                        r,
                        n,
                        RawError::Type(alloc::format!("`!` expects Bool, got {}", other.type_name())),
                    )
                    .into()),
            },
            UnOp::Neg => {
                let state = self.roots[r.index()].nodes[n.index()].state;
                match state.tier {
                    Tier::Specialized(var) if operands_fit(var, &v, &v) => {}
                    Tier::Generic => {}
                    Tier::Uninitialized => {
                        let next = match variant_of(&v, &v) {
                            Some(Variant::Str) | None => Tier::Generic,
                            Some(var) => Tier::Specialized(var),
                        };
                        self.respecialize(r, n, next);
                    }
                    Tier::Specialized(_) => self.respecialize(r, n, Tier::Generic),
                }
                match v {
                    Value::Int(i) => i
                        .checked_neg()
                        .map(Value::Int)
                        .ok_or_else(|| self.raise(r, n, RawError::Overflow).into()),
                    Value::Float(x) => Ok(Value::Float(-x)),
                    other => Err(self
                        .raise(
                            r,
                            n,
                            RawError::Type(alloc::format!("cannot negate {}", other.type_name())),
                        )
                        .into()),
                }
            }
        }
    }

    /// Replaces `n` with a copy in state `tier`. A node that was already
    /// replaced by a nested activation is left alone.
    #[inline(never)]
    fn respecialize(&mut self, r: RootId, n: NodeId, tier: Tier) {
        let root = &mut self.roots[r.index()];
        let old = root.node(n);
        if old.parent.is_none() {
            return;
        }
        let mut state = old.state;
        state.rewrite_count += 1;
        state.tier = if state.rewrite_count >= REWRITE_LIMIT {
            Tier::Generic
        } else {
            tier
        };
        let copy = Node {
            kind: old.kind,
            state,
            tags: old.tags,
            section: old.section.clone(),
            parent: None,
        };
        let new = NodeId(root.nodes.len() as u32);
        root.nodes.push(copy);
        root.replace_node(n, new).expect("attached node can be replaced");
    }

    /// Specialization state of a node.
    pub fn node_state(&self, root: RootId, node: NodeId) -> NodeState {
        self.roots[root.index()].node(node).state
    }
}

fn variant_of(a: &Value, b: &Value) -> Option<Variant> {
    match (a, b) {
        (Value::Int(_), Value::Int(_)) => Some(Variant::Int),
        (Value::Float(_), Value::Float(_)) => Some(Variant::Float),
        (Value::Str(_), Value::Str(_)) => Some(Variant::Str),
        _ => None,
    }
}

#[inline]
fn operands_fit(v: Variant, a: &Value, b: &Value) -> bool {
    match v {
        Variant::Int => matches!((a, b), (Value::Int(_), Value::Int(_))),
        Variant::Float => matches!((a, b), (Value::Float(_), Value::Float(_))),
        Variant::Str => matches!((a, b), (Value::Str(_), Value::Str(_))),
    }
}

fn numeric(a: &Value, b: &Value) -> Option<(f64, f64)> {
    match (a, b) {
        (Value::Float(x), Value::Float(y)) => Some((*x, *y)),
        (Value::Int(x), Value::Float(y)) => Some((*x as f64, *y)),
        (Value::Float(x), Value::Int(y)) => Some((*x, *y as f64)),
        _ => None,
    }
}

fn type_error(op: BinOp, a: &Value, b: &Value) -> RawError {
    RawError::Type(alloc::format!(
        "cannot apply `{}` to {} and {}",
        op.symbol(),
        a.type_name(),
        b.type_name()
    ))
}

/// Shared operator semantics of both frontends.
pub fn generic_binary(op: BinOp, a: &Value, b: &Value) -> core::result::Result<Value, RawError> {
    use BinOp::*;
    match op {
        Eq => return Ok(Value::Bool(a.guest_eq(b))),
        Ne => return Ok(Value::Bool(!a.guest_eq(b))),
        _ => {}
    }
    if let (Value::Int(x), Value::Int(y)) = (a, b) {
        let (x, y) = (*x, *y);
        return match op {
            Add => x.checked_add(y).map(Value::Int).ok_or(RawError::Overflow),
            Sub => x.checked_sub(y).map(Value::Int).ok_or(RawError::Overflow),
            Mul => x.checked_mul(y).map(Value::Int).ok_or(RawError::Overflow),
            Div | DivIeee if y == 0 => Err(RawError::DivisionByZero),
            Div | DivIeee => x.checked_div(y).map(Value::Int).ok_or(RawError::Overflow),
            Rem if y == 0 => Err(RawError::DivisionByZero),
            Rem => x.checked_rem(y).map(Value::Int).ok_or(RawError::Overflow),
            Lt => Ok(Value::Bool(x < y)),
            Le => Ok(Value::Bool(x <= y)),
            Gt => Ok(Value::Bool(x > y)),
            Ge => Ok(Value::Bool(x >= y)),
            Eq | Ne => unreachable!(),
        };
    }
    if let Some((x, y)) = numeric(a, b) {
        return match op {
            Add => Ok(Value::Float(x + y)),
            Sub => Ok(Value::Float(x - y)),
            Mul => Ok(Value::Float(x * y)),
            Div if y == 0.0 => Err(RawError::DivisionByZero),
            Div | DivIeee => Ok(Value::Float(x / y)),
            Rem => Ok(Value::Float(x % y)),
            Lt => Ok(Value::Bool(x < y)),
            Le => Ok(Value::Bool(x <= y)),
            Gt => Ok(Value::Bool(x > y)),
            Ge => Ok(Value::Bool(x >= y)),
            Eq | Ne => unreachable!(),
        };
    }
    if let (Value::Str(x), Value::Str(y)) = (a, b) {
        return match op {
            Add => {
                let mut s = String::with_capacity(x.len() + y.len());
                s.push_str(x);
                s.push_str(y);
                Ok(Value::Str(Rc::from(s)))
            }
            Lt => Ok(Value::Bool(x < y)),
            Le => Ok(Value::Bool(x <= y)),
            Gt => Ok(Value::Bool(x > y)),
            Ge => Ok(Value::Bool(x >= y)),
            _ => Err(type_error(op, a, b)),
        };
    }
    Err(type_error(op, a, b))
}
