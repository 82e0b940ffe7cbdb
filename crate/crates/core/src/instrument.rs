//! Probes, subscriptions and bindings.
//!
//! A probe is a wrapper node spliced above an instrumentable node plus a
//! probe record holding the subscription chain. Probes are inserted eagerly
//! when a binding or an AST appears; chains are rebuilt lazily the next time
//! the wrapper executes (or when [`Engine::force_lazy_checks`] runs). A
//! rebuild that finds no live subscription unsplices the wrapper, so the tree
//! returns to its original shape.
//!
//! Chain order is binding registration order.

use alloc::boxed::Box;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;
use core::cell::Cell;
use core::fmt;

use crate::error::{Error, Result};
use crate::exception::{ExceptionKind, GuestException};
use crate::filter::SourceSectionFilter;
use crate::frame::{FrameRef, Scope};
use crate::interp::{Engine, Fragment};
use crate::node::{Assumption, Node, NodeId, NodeKind, ProbeId, RootId, TagSet};
use crate::source::{Source, SourceSection};
use crate::value::Value;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct BindingId(pub u32);

impl fmt::Display for BindingId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Static description of a probed location.
#[derive(Clone, Debug)]
pub struct EventContext {
    pub root: RootId,
    pub node: NodeId,
    pub section: SourceSection,
    pub tags: TagSet,
    pub language_id: Rc<str>,
    pub root_name: Rc<str>,
}

impl EventContext {
    pub fn source(&self) -> &Rc<Source> {
        self.section.source()
    }

    pub fn is_internal(&self) -> bool {
        self.section.source().is_internal()
    }
}

impl fmt::Display for EventContext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.section)
    }
}

/// Failure inside client code. Never reaches the guest program.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientError(pub String);

impl From<&str> for ClientError {
    fn from(s: &str) -> Self {
        ClientError(s.into())
    }
}

impl From<String> for ClientError {
    fn from(s: String) -> Self {
        ClientError(s)
    }
}

impl From<GuestException> for ClientError {
    fn from(e: GuestException) -> Self {
        ClientError(alloc::format!("{e}"))
    }
}

impl fmt::Display for ClientError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub type ClientResult = core::result::Result<(), ClientError>;

/// Which callbacks a handler implements; the kernel skips the rest.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct EventMask(u8);

impl EventMask {
    pub const ENTER: EventMask = EventMask(1);
    pub const RETURN_VALUE: EventMask = EventMask(2);
    pub const RETURN_EXCEPTIONAL: EventMask = EventMask(4);
    pub const INPUTS: EventMask = EventMask(8);
    pub const RETURNS: EventMask = EventMask(2 | 4);
    pub const ALL: EventMask = EventMask(1 | 2 | 4);

    pub const fn union(self, other: EventMask) -> EventMask {
        EventMask(self.0 | other.0)
    }

    pub const fn contains(self, other: EventMask) -> bool {
        self.0 & other.0 == other.0
    }
}

/// Listener shared by every location of a binding.
pub trait ExecutionEventListener {
    fn on_enter(&self, _cx: &mut EventCx<'_>) -> ClientResult {
        Ok(())
    }
    fn on_return_value(&self, _cx: &mut EventCx<'_>, _value: &Value) -> ClientResult {
        Ok(())
    }
    fn on_return_exceptional(&self, _cx: &mut EventCx<'_>, _exception: &GuestException) -> ClientResult {
        Ok(())
    }
    fn interests(&self) -> EventMask {
        EventMask::ALL
    }
}

/// Per-location handler produced by a factory; may own injected guest code.
pub trait ExecutionEventNode {
    fn on_enter(&self, _cx: &mut EventCx<'_>) -> ClientResult {
        Ok(())
    }
    fn on_return_value(&self, _cx: &mut EventCx<'_>, _value: &Value) -> ClientResult {
        Ok(())
    }
    fn on_return_exceptional(&self, _cx: &mut EventCx<'_>, _exception: &GuestException) -> ClientResult {
        Ok(())
    }
    /// Value of declared input `index` of the probed expression, reported
    /// after the input completes and before the node returns.
    fn on_input_value(&self, _cx: &mut EventCx<'_>, _index: usize, _value: &Value) -> ClientResult {
        Ok(())
    }
    fn interests(&self) -> EventMask {
        EventMask::ALL
    }
}

pub trait ExecutionEventNodeFactory {
    /// Called once per probed location, the first time execution reaches it.
    /// `Ok(None)` leaves the location without a handler.
    fn create(&self, cx: &mut FactoryCx<'_>) -> core::result::Result<Option<Rc<dyn ExecutionEventNode>>, ClientError>;
}

pub trait LoadSourceListener {
    fn on_load(&self, source: &Rc<Source>);
}

/// Notified after a source has been parsed and its roots probed.
pub trait ProgramLoadListener {
    fn on_program_loaded(&self, engine: &mut Engine, source: &Rc<Source>);
}

pub(crate) enum BindingHandler {
    Listener(Rc<dyn ExecutionEventListener>),
    Factory(Rc<dyn ExecutionEventNodeFactory>),
}

pub(crate) struct BindingState {
    pub(crate) id: BindingId,
    pub(crate) filter: Rc<SourceSectionFilter>,
    pub(crate) handler: BindingHandler,
    pub(crate) disposed: Cell<bool>,
}

/// Handle to a subscription; pass it to [`Engine::dispose`] to cancel.
#[derive(Clone)]
pub struct EventBinding {
    pub(crate) state: Rc<BindingState>,
}

impl EventBinding {
    pub fn id(&self) -> BindingId {
        self.state.id
    }

    pub fn is_disposed(&self) -> bool {
        self.state.disposed.get()
    }

    pub fn filter(&self) -> &Rc<SourceSectionFilter> {
        &self.state.filter
    }
}

impl fmt::Debug for EventBinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EventBinding")
            .field("id", &self.state.id)
            .field("disposed", &self.state.disposed.get())
            .finish()
    }
}

#[derive(Clone)]
pub(crate) enum LoadHandler {
    Source(Rc<dyn LoadSourceListener>),
    Program(Rc<dyn ProgramLoadListener>),
}

pub(crate) struct LoadBinding {
    pub(crate) id: BindingId,
    pub(crate) filter: Rc<SourceSectionFilter>,
    pub(crate) listener: LoadHandler,
}

#[derive(Clone)]
pub(crate) enum Handler {
    Listener(Rc<dyn ExecutionEventListener>),
    Node(Rc<dyn ExecutionEventNode>),
}

#[derive(Clone)]
pub(crate) struct Subscription {
    pub(crate) binding: Rc<BindingState>,
    pub(crate) handler: Handler,
    pub(crate) mask: EventMask,
}

type FragmentCache = Vec<(BindingId, Option<Rc<dyn ExecutionEventNode>>)>;

pub(crate) struct Probe {
    pub(crate) wrapper: NodeId,
    pub(crate) delegate: NodeId,
    pub(crate) invalid: bool,
    pub(crate) validated_under: Option<Rc<Assumption>>,
    pub(crate) chain: Rc<[Subscription]>,
    pub(crate) context: Rc<EventContext>,
    pub(crate) fragments: FragmentCache,
    pub(crate) taps: Vec<NodeId>,
    pub(crate) removed: bool,
}

impl Probe {
    #[inline]
    pub(crate) fn is_valid(&self) -> bool {
        !self.invalid && self.validated_under.as_ref().is_some_and(|a| a.is_valid())
    }

    pub(crate) fn retarget(&mut self, delegate: NodeId) {
        self.delegate = delegate;
        Rc::make_mut(&mut self.context).node = delegate;
    }
}

/// Execution state handed to event handlers.
pub struct EventCx<'a> {
    pub(crate) engine: &'a mut Engine,
    pub(crate) context: &'a EventContext,
    pub(crate) frame: &'a FrameRef,
}

impl<'a> EventCx<'a> {
    pub fn context(&self) -> &EventContext {
        self.context
    }

    pub fn frame(&self) -> &FrameRef {
        self.frame
    }

    pub fn engine(&self) -> &Engine {
        self.engine
    }

    /// Number of active guest calls, including the top-level program.
    pub fn stack_depth(&self) -> usize {
        self.engine.stack.len()
    }

    /// Sequence number of the current enter event; every subscription at one
    /// location sees the same number for the same execution.
    pub fn enter_seq(&self) -> u64 {
        self.engine.enter_seq
    }

    pub fn display(&self, value: &Value) -> String {
        self.engine.display_value(&self.context.language_id, value)
    }

    /// Runs an injected fragment against the current frame. Its value and
    /// exceptions stay with the caller.
    pub fn execute_fragment(&mut self, fragment: Fragment) -> core::result::Result<Value, GuestException> {
        self.engine.execute_fragment(fragment, self.frame)
    }

    /// Parses and runs `text` once in the current frame.
    pub fn eval(&mut self, text: &str) -> core::result::Result<Value, GuestException> {
        let fragment = self.engine.parse_inline(self.context.root, self.context.node, text)?;
        self.engine.execute_fragment(fragment, self.frame)
    }

    pub fn local_scopes(&self, include_internal: bool) -> Result<Vec<Scope>> {
        self.engine
            .find_local_scopes(self.context.root, self.context.node, self.frame, include_internal)
    }

    /// Stops the running program with a `Cancelled` exception raised at this
    /// location, after the current enter event completes.
    pub fn cancel(&mut self, reason: &str) {
        if self.engine.cancel.is_none() {
            self.engine.cancel = Some(reason.into());
        }
    }

    /// Mutable engine access for privileged tools (debugger suspension).
    pub fn engine_mut(&mut self) -> &mut Engine {
        self.engine
    }
}

/// Factory-time state: location context and inline parsing.
pub struct FactoryCx<'a> {
    pub(crate) engine: &'a mut Engine,
    pub(crate) context: &'a EventContext,
    pub(crate) frame: Option<&'a FrameRef>,
}

impl<'a> FactoryCx<'a> {
    pub fn context(&self) -> &EventContext {
        self.context
    }

    pub fn frame(&self) -> Option<&FrameRef> {
        self.frame
    }

    /// Translates `text` in the lexical context of this location.
    pub fn parse_inline(&mut self, text: &str) -> core::result::Result<Fragment, GuestException> {
        self.engine.parse_inline(self.context.root, self.context.node, text)
    }
}

impl Engine {
    fn next_binding_id(&mut self) -> BindingId {
        self.next_binding += 1;
        BindingId(self.next_binding)
    }

    pub fn attach_listener(
        &mut self,
        filter: Rc<SourceSectionFilter>,
        listener: Rc<dyn ExecutionEventListener>,
    ) -> Result<EventBinding> {
        self.add_binding(filter, BindingHandler::Listener(listener))
    }

    pub fn attach_factory(
        &mut self,
        filter: Rc<SourceSectionFilter>,
        factory: Rc<dyn ExecutionEventNodeFactory>,
    ) -> Result<EventBinding> {
        self.add_binding(filter, BindingHandler::Factory(factory))
    }

    fn add_binding(&mut self, filter: Rc<SourceSectionFilter>, handler: BindingHandler) -> Result<EventBinding> {
        if self.closed {
            return Err(Error::EngineClosed);
        }
        let state = Rc::new(BindingState {
            id: self.next_binding_id(),
            filter,
            handler,
            disposed: Cell::new(false),
        });
        self.bindings.push(state.clone());
        for r in 0..self.roots.len() {
            let root = RootId(r as u32);
            if !state.filter.root_may_match(&self.roots[r]) {
                continue;
            }
            for node in self.matching_nodes(root, &state.filter) {
                let probe = self.probe(root, node)?;
                self.invalidate_probe(root, probe);
            }
        }
        Ok(EventBinding { state })
    }

    /// Cancels a binding. Idempotent.
    pub fn dispose(&mut self, binding: &EventBinding) {
        self.dispose_id(binding.id())
    }

    pub fn dispose_id(&mut self, id: BindingId) {
        let Some(pos) = self.bindings.iter().position(|b| b.id == id) else {
            self.load_bindings.retain(|b| b.id != id);
            return;
        };
        let state = self.bindings.remove(pos);
        state.disposed.set(true);
        for r in 0..self.roots.len() {
            let root = RootId(r as u32);
            if !state.filter.root_may_match(&self.roots[r]) {
                continue;
            }
            for node in self.matching_nodes(root, &state.filter) {
                let probe = self.roots[r].wrapper_of(node).map(|(_, p)| p);
                debug_assert!(probe.is_some(), "matching node of a live binding is probed");
                if let Some(p) = probe {
                    self.invalidate_probe(root, p);
                }
            }
        }
    }

    /// Live bindings in registration order.
    pub fn bindings(&self) -> Vec<EventBinding> {
        self.bindings
            .iter()
            .map(|s| EventBinding { state: s.clone() })
            .collect()
    }

    pub(crate) fn matching_nodes(&self, root: RootId, filter: &SourceSectionFilter) -> Vec<NodeId> {
        let r = &self.roots[root.index()];
        r.program_nodes()
            .into_iter()
            .filter(|&n| filter.matches(r.node(n)))
            .collect()
    }

    /// Every location a binding currently applies to, in tree order.
    pub fn binding_locations(&self, binding: &EventBinding) -> Vec<EventContext> {
        let mut out = Vec::new();
        for r in 0..self.roots.len() {
            let root = RootId(r as u32);
            if !binding.state.filter.root_may_match(&self.roots[r]) {
                continue;
            }
            for n in self.matching_nodes(root, &binding.state.filter) {
                out.push(self.context_for(root, n));
            }
        }
        out
    }

    pub(crate) fn context_for(&self, root: RootId, node: NodeId) -> EventContext {
        let r = &self.roots[root.index()];
        let n = r.node(node);
        EventContext {
            root,
            node,
            section: n.section.clone().expect("instrumentable node has a section"),
            tags: n.tags,
            language_id: r.language_id.clone(),
            root_name: r.name.clone(),
        }
    }

    /// Probes `node`, returning the existing probe if there is one.
    pub fn probe(&mut self, root: RootId, node: NodeId) -> Result<ProbeId> {
        if let Some((_, p)) = self.roots[root.index()].wrapper_of(node) {
            return Ok(p);
        }
        if !self.roots[root.index()].node(node).is_instrumentable() {
            return Err(Error::IllegalRewrite("node is not instrumentable"));
        }
        let context = Rc::new(self.context_for(root, node));
        let r = &mut self.roots[root.index()];
        let parent = r
            .node(node)
            .parent
            .ok_or(Error::IllegalRewrite("cannot probe a detached node"))?;
        let probe = ProbeId(r.probes.len() as u32);
        let wrapper = NodeId(r.nodes.len() as u32);
        r.nodes.push(Node::new(
            NodeKind::Wrapper { delegate: node, probe },
            TagSet::EMPTY,
            None,
        ));
        r.redirect_child(parent, node, wrapper)?;
        r.node_mut(node).parent = Some(wrapper);
        r.probes.push(Probe {
            wrapper,
            delegate: node,
            invalid: true,
            validated_under: None,
            chain: Rc::from(Vec::new()),
            context,
            fragments: Vec::new(),
            taps: Vec::new(),
            removed: false,
        });
        r.invalidate_assumption();
        Ok(probe)
    }

    pub(crate) fn invalidate_probe(&mut self, root: RootId, probe: ProbeId) {
        let r = &mut self.roots[root.index()];
        r.probes[probe.0 as usize].invalid = true;
        r.invalidate_assumption();
    }

    /// Marks every probe of `root` stale by invalidating its assumption.
    pub fn invalidate_root(&mut self, root: RootId) {
        self.roots[root.index()].invalidate_assumption();
    }

    /// Whether the probe above `node` (if any) would rebuild its chain on the
    /// next dispatch.
    pub fn probe_is_stale(&self, root: RootId, probe: ProbeId) -> bool {
        let p = &self.roots[root.index()].probes[probe.0 as usize];
        !p.removed && !p.is_valid()
    }

    /// Live probes of a root.
    pub fn probes_of(&self, root: RootId) -> Vec<ProbeId> {
        let r = &self.roots[root.index()];
        (0..r.probes.len() as u32)
            .map(ProbeId)
            .filter(|p| !r.probes[p.0 as usize].removed)
            .collect()
    }

    /// Rebuilds the subscription chain of a stale probe; removes the probe if
    /// no live binding matches its node any more.
    pub(crate) fn check_subscriptions(&mut self, root: RootId, probe: ProbeId, frame: Option<&FrameRef>) {
        let pi = probe.0 as usize;
        let (node, mut cache, context) = {
            let p = &mut self.roots[root.index()].probes[pi];
            if p.removed || p.is_valid() {
                return;
            }
            p.chain = Rc::from(Vec::new());
            (p.delegate, core::mem::take(&mut p.fragments), p.context.clone())
        };
        cache.retain(|(id, _)| self.bindings.iter().any(|b| b.id == *id));
        let mut chain = Vec::new();
        let bindings = self.bindings.clone();
        for binding in &bindings {
            if !binding.filter.matches(self.roots[root.index()].node(node)) {
                continue;
            }
            let handler = match &binding.handler {
                BindingHandler::Listener(l) => Some((Handler::Listener(l.clone()), l.interests())),
                BindingHandler::Factory(f) => {
                    let made = match cache.iter().find(|(id, _)| *id == binding.id) {
                        Some((_, made)) => made.clone(),
                        None => {
                            let made = self.create_event_node(binding, f.clone(), &context, frame);
                            cache.push((binding.id, made.clone()));
                            made
                        }
                    };
                    made.map(|n| {
                        let mask = n.interests();
                        (Handler::Node(n), mask)
                    })
                }
            };
            if let Some((handler, mask)) = handler {
                chain.push(Subscription {
                    binding: binding.clone(),
                    handler,
                    mask,
                });
            }
        }
        let wants_inputs = chain.iter().any(|s| s.mask.contains(EventMask::INPUTS));
        let r = &mut self.roots[root.index()];
        r.probes[pi].fragments = cache;
        if chain.is_empty() {
            self.remove_probe(root, probe);
            return;
        }
        let assumption = r.current_assumption();
        let p = &mut r.probes[pi];
        p.chain = Rc::from(chain);
        p.invalid = false;
        p.validated_under = Some(assumption);
        let has_taps = !p.taps.is_empty();
        if wants_inputs && !has_taps {
            self.insert_taps(root, probe);
        } else if !wants_inputs && has_taps {
            self.remove_taps(root, probe);
        }
    }

    fn create_event_node(
        &mut self,
        binding: &Rc<BindingState>,
        factory: Rc<dyn ExecutionEventNodeFactory>,
        context: &EventContext,
        frame: Option<&FrameRef>,
    ) -> Option<Rc<dyn ExecutionEventNode>> {
        let depth = self.stack.len();
        let mut made = Ok(None);
        {
            let mut cx = FactoryCx {
                engine: self,
                context,
                frame,
            };
            let guard = cx.engine.panic_guard;
            let mut call = || made = factory.create(&mut cx);
            if let Some(guard) = guard {
                if let Err(panic) = guard(&mut call) {
                    made = Err(ClientError(panic));
                }
            } else {
                call();
            }
        }
        self.stack.truncate(depth);
        match made {
            Ok(node) => node,
            Err(e) => {
                self.report_client_error(binding.id, context, &e);
                None
            }
        }
    }

    fn remove_probe(&mut self, root: RootId, probe: ProbeId) {
        self.remove_taps(root, probe);
        let r = &mut self.roots[root.index()];
        let p = &mut r.probes[probe.0 as usize];
        p.removed = true;
        p.chain = Rc::from(Vec::new());
        p.fragments.clear();
        let (wrapper, delegate) = (p.wrapper, p.delegate);
        if let Some(parent) = r.node(wrapper).parent {
            r.redirect_child(parent, wrapper, delegate)
                .expect("wrapper is a child of its parent");
        }
        r.invalidate_assumption();
    }

    fn insert_taps(&mut self, root: RootId, probe: ProbeId) {
        let delegate = self.roots[root.index()].probes[probe.0 as usize].delegate;
        let frontend = self.frontend_of(root);
        let inputs = frontend.declare_expression_inputs(&self.roots[root.index()], delegate);
        let r = &mut self.roots[root.index()];
        let children = r.children(delegate);
        let mut taps = Vec::new();
        for (k, &i) in inputs.iter().enumerate() {
            let Some(&child) = children.get(i) else { continue };
            let tap = NodeId(r.nodes.len() as u32);
            r.nodes.push(Node::new(
                NodeKind::InputTap {
                    delegate: child,
                    probe,
                    index: k as u32,
                },
                TagSet::EMPTY,
                None,
            ));
            r.redirect_child(delegate, child, tap).expect("input is a child");
            r.node_mut(child).parent = Some(tap);
            taps.push(tap);
        }
        r.probes[probe.0 as usize].taps = taps;
        r.invalidate_assumption();
        // assumption moved on; the probe itself stays valid
        let a = r.current_assumption();
        r.probes[probe.0 as usize].validated_under = Some(a);
    }

    fn remove_taps(&mut self, root: RootId, probe: ProbeId) {
        let r = &mut self.roots[root.index()];
        let taps = core::mem::take(&mut r.probes[probe.0 as usize].taps);
        for tap in taps {
            let NodeKind::InputTap { delegate, .. } = r.node(tap).kind else {
                continue;
            };
            if let Some(parent) = r.node(tap).parent {
                r.redirect_child(parent, tap, delegate).expect("tap is a child");
            }
        }
    }

    /// Rebuilds every stale probe now instead of at its next execution.
    pub fn force_lazy_checks(&mut self) {
        for r in 0..self.roots.len() {
            let root = RootId(r as u32);
            for p in 0..self.roots[r].probes.len() {
                self.check_subscriptions(root, ProbeId(p as u32), None);
            }
        }
    }

    /// Live `(root, node, binding)` subscriptions, for inspection and tests.
    pub fn live_subscriptions(&self) -> Vec<(RootId, NodeId, BindingId)> {
        let mut out = Vec::new();
        for (r, root) in self.roots.iter().enumerate() {
            for p in &root.probes {
                if p.removed {
                    continue;
                }
                for s in p.chain.iter() {
                    out.push((RootId(r as u32), p.delegate, s.binding.id));
                }
            }
        }
        out.sort();
        out
    }

    /// Appends one line to the diagnostics stream.
    pub fn report_client_error(&mut self, binding: BindingId, context: &EventContext, error: &ClientError) {
        self.client_errors += 1;
        let line = alloc::format!("INSTRUMENT-ERROR {} {} {}", binding, context, error);
        self.host.write_diagnostic(&line);
    }

    pub fn client_error_count(&self) -> usize {
        self.client_errors
    }

    pub fn attach_load_source_listener(
        &mut self,
        filter: Rc<SourceSectionFilter>,
        listener: Rc<dyn LoadSourceListener>,
    ) -> Result<BindingId> {
        if self.closed {
            return Err(Error::EngineClosed);
        }
        let id = self.next_binding_id();
        self.load_bindings.push(LoadBinding {
            id,
            filter,
            listener: LoadHandler::Source(listener),
        });
        Ok(id)
    }

    /// Subscribes to parsed programs; dispose with [`Engine::dispose_id`].
    pub fn attach_program_load_listener(
        &mut self,
        filter: Rc<SourceSectionFilter>,
        listener: Rc<dyn ProgramLoadListener>,
    ) -> Result<BindingId> {
        if self.closed {
            return Err(Error::EngineClosed);
        }
        let id = self.next_binding_id();
        self.load_bindings.push(LoadBinding {
            id,
            filter,
            listener: LoadHandler::Program(listener),
        });
        Ok(id)
    }

    /// Already registered sources passing the filter's source criteria.
    pub fn loaded_sources(&self, filter: &SourceSectionFilter) -> Vec<Rc<Source>> {
        self.sources
            .iter()
            .filter(|s| filter.matches_source(s))
            .cloned()
            .collect()
    }

    pub(crate) fn notify_source_loaded(&mut self, source: &Rc<Source>) {
        for l in self.load_listeners(source) {
            if let LoadHandler::Source(l) = l {
                l.on_load(source);
            }
        }
    }

    pub(crate) fn notify_program_loaded(&mut self, source: &Rc<Source>) {
        for l in self.load_listeners(source) {
            if let LoadHandler::Program(l) = l {
                l.on_program_loaded(self, source);
            }
        }
    }

    fn load_listeners(&self, source: &Source) -> Vec<LoadHandler> {
        self.load_bindings
            .iter()
            .filter(|b| b.filter.matches_source(source))
            .map(|b| b.listener.clone())
            .collect()
    }

    /// Probes matching nodes of a freshly registered root for every live
    /// binding.
    pub(crate) fn on_ast_loaded(&mut self, root: RootId) {
        let bindings = self.bindings.clone();
        for binding in bindings {
            if !binding.filter.root_may_match(&self.roots[root.index()]) {
                continue;
            }
            for node in self.matching_nodes(root, &binding.filter) {
                if let Ok(probe) = self.probe(root, node) {
                    self.invalidate_probe(root, probe);
                }
            }
        }
    }

    // ---- dispatch kernel -------------------------------------------------

    pub(crate) fn dispatch_enter(&mut self, chain: &[Subscription], context: &EventContext, frame: &FrameRef) {
        for sub in chain {
            if !sub.mask.contains(EventMask::ENTER) || sub.binding.disposed.get() {
                continue;
            }
            let r = self.guarded(context, frame, |cx| match &sub.handler {
                Handler::Listener(l) => l.on_enter(cx),
                Handler::Node(n) => n.on_enter(cx),
            });
            if let Err(e) = r {
                self.report_client_error(sub.binding.id, context, &e);
            }
        }
    }

    pub(crate) fn dispatch_return(
        &mut self,
        chain: &[Subscription],
        context: &EventContext,
        frame: &FrameRef,
        value: &Value,
    ) {
        for sub in chain {
            if !sub.mask.contains(EventMask::RETURN_VALUE) || sub.binding.disposed.get() {
                continue;
            }
            let r = self.guarded(context, frame, |cx| match &sub.handler {
                Handler::Listener(l) => l.on_return_value(cx, value),
                Handler::Node(n) => n.on_return_value(cx, value),
            });
            if let Err(e) = r {
                self.report_client_error(sub.binding.id, context, &e);
            }
        }
    }

    pub(crate) fn dispatch_exceptional(
        &mut self,
        chain: &[Subscription],
        context: &EventContext,
        frame: &FrameRef,
        exception: &GuestException,
    ) {
        for sub in chain {
            if !sub.mask.contains(EventMask::RETURN_EXCEPTIONAL) || sub.binding.disposed.get() {
                continue;
            }
            let r = self.guarded(context, frame, |cx| match &sub.handler {
                Handler::Listener(l) => l.on_return_exceptional(cx, exception),
                Handler::Node(n) => n.on_return_exceptional(cx, exception),
            });
            if let Err(e) = r {
                self.report_client_error(sub.binding.id, context, &e);
            }
        }
    }

    pub(crate) fn dispatch_input(
        &mut self,
        chain: &[Subscription],
        context: &EventContext,
        frame: &FrameRef,
        index: usize,
        value: &Value,
    ) {
        for sub in chain {
            if !sub.mask.contains(EventMask::INPUTS) || sub.binding.disposed.get() {
                continue;
            }
            let Handler::Node(n) = &sub.handler else { continue };
            let r = self.guarded(context, frame, |cx| n.on_input_value(cx, index, value));
            if let Err(e) = r {
                self.report_client_error(sub.binding.id, context, &e);
            }
        }
    }

    /// Runs one handler callback, isolating panics if the host can catch them.
    fn guarded(
        &mut self,
        context: &EventContext,
        frame: &FrameRef,
        f: impl FnOnce(&mut EventCx<'_>) -> ClientResult,
    ) -> ClientResult {
        let depth = self.stack.len();
        let guard = self.panic_guard;
        let mut cx = EventCx {
            engine: self,
            context,
            frame,
        };
        let result = match guard {
            None => f(&mut cx),
            Some(guard) => {
                let mut f = Some(f);
                let mut out = Ok(());
                let mut call = || {
                    if let Some(f) = f.take() {
                        out = f(&mut cx);
                    }
                };
                match guard(&mut call) {
                    Ok(()) => out,
                    Err(panic) => Err(ClientError(panic)),
                }
            }
        };
        self.stack.truncate(depth);
        result
    }
}

/// Boxed listener from closures, for quick clients and tests.
pub struct FnListener<E> {
    pub on_enter: E,
}

impl<E> ExecutionEventListener for FnListener<E>
where
    E: Fn(&mut EventCx<'_>) -> ClientResult,
{
    fn on_enter(&self, cx: &mut EventCx<'_>) -> ClientResult {
        (self.on_enter)(cx)
    }

    fn interests(&self) -> EventMask {
        EventMask::ENTER
    }
}

/// Convenience: an enter-only listener from a closure.
pub fn enter_listener<E>(f: E) -> Rc<dyn ExecutionEventListener>
where
    E: Fn(&mut EventCx<'_>) -> ClientResult + 'static,
{
    Rc::new(FnListener { on_enter: f })
}

pub(crate) fn cancelled_exception(engine: &Engine, root: RootId, node: NodeId, reason: &str) -> Box<GuestException> {
    let mut e = engine.raise(root, node, crate::exception::RawError::Cancelled(reason.into()));
    e.kind = ExceptionKind::Cancelled;
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::host::BufferHost;
    use crate::node::Tag;
    use alloc::string::ToString;
    use core::cell::RefCell;

    type Log = Rc<RefCell<Vec<String>>>;

    struct Recorder {
        name: &'static str,
        log: Log,
    }

    impl ExecutionEventListener for Recorder {
        fn on_enter(&self, cx: &mut EventCx<'_>) -> ClientResult {
            let text = cx.context().section.text().to_string();
            self.log
                .borrow_mut()
                .push(alloc::format!("{}:enter {}", self.name, text));
            Ok(())
        }
        fn on_return_value(&self, cx: &mut EventCx<'_>, value: &Value) -> ClientResult {
            let text = cx.context().section.text().to_string();
            self.log
                .borrow_mut()
                .push(alloc::format!("{}:return {} = {}", self.name, text, cx.display(value)));
            Ok(())
        }
        fn on_return_exceptional(&self, cx: &mut EventCx<'_>, e: &GuestException) -> ClientResult {
            let text = cx.context().section.text().to_string();
            self.log
                .borrow_mut()
                .push(alloc::format!("{}:throw {} {}", self.name, text, e.kind.as_str()));
            Ok(())
        }
    }

    fn setup(text: &str) -> (Engine, RootId, BufferHost) {
        let host = BufferHost::new();
        let mut engine = Engine::new(Box::new(host.clone()));
        let src = engine.create_source("t.toy", "toylang", text, false).unwrap();
        let main = engine.load(&src).unwrap();
        (engine, main, host)
    }

    fn statements() -> Rc<SourceSectionFilter> {
        SourceSectionFilter::builder().tag_is(Tag::Statement).build().unwrap()
    }

    #[test]
    fn statement_events_in_order() {
        let (mut engine, main, _) = setup("x = 1\ny = x + 1\nprint(y)");
        let log: Log = Default::default();
        engine
            .attach_listener(
                statements(),
                Rc::new(Recorder {
                    name: "a",
                    log: log.clone(),
                }),
            )
            .unwrap();
        engine.execute_root(main, Vec::new()).unwrap();
        assert_eq!(
            *log.borrow(),
            [
                "a:enter x = 1",
                "a:return x = 1 = 1",
                "a:enter y = x + 1",
                "a:return y = x + 1 = 2",
                "a:enter print(y)",
                "a:return print(y) = null"
            ]
        );
    }

    #[test]
    fn probing_inserts_two_nodes_per_site_and_dispose_restores() {
        let (mut engine, main, _) = setup("x = 1\ny = 2\nz = 3");
        let before = engine.root(main).node_count();
        let shape = engine.root(main).shape();
        let b = engine
            .attach_listener(statements(), enter_listener(|_| Ok(())))
            .unwrap();
        assert_eq!(engine.root(main).node_count(), before + 6);
        engine.execute_root(main, Vec::new()).unwrap();
        engine.dispose(&b);
        engine.dispose(&b);
        engine.force_lazy_checks();
        assert_eq!(engine.root(main).node_count(), before);
        assert_eq!(engine.root(main).shape(), shape);
    }

    #[test]
    fn dispose_before_run_yields_no_events() {
        let (mut engine, main, _) = setup("x = 1\ny = 2");
        let log: Log = Default::default();
        let b = engine
            .attach_listener(
                statements(),
                Rc::new(Recorder {
                    name: "a",
                    log: log.clone(),
                }),
            )
            .unwrap();
        engine.dispose(&b);
        engine.execute_root(main, Vec::new()).unwrap();
        assert!(log.borrow().is_empty());
        assert_eq!(engine.root(main).wrapper_count(), 0);
    }

    #[test]
    fn chain_follows_registration_order_and_survives_partial_dispose() {
        let (mut engine, main, _) = setup("x = 1");
        let log: Log = Default::default();
        let a = engine
            .attach_listener(
                statements(),
                Rc::new(Recorder {
                    name: "a",
                    log: log.clone(),
                }),
            )
            .unwrap();
        engine
            .attach_listener(
                statements(),
                Rc::new(Recorder {
                    name: "b",
                    log: log.clone(),
                }),
            )
            .unwrap();
        engine.execute_root(main, Vec::new()).unwrap();
        assert_eq!(
            *log.borrow(),
            [
                "a:enter x = 1",
                "b:enter x = 1",
                "a:return x = 1 = 1",
                "b:return x = 1 = 1"
            ]
        );
        log.borrow_mut().clear();
        engine.dispose(&a);
        engine.execute_root(main, Vec::new()).unwrap();
        assert_eq!(*log.borrow(), ["b:enter x = 1", "b:return x = 1 = 1"]);
        assert_eq!(engine.root(main).wrapper_count(), 1);
    }

    #[test]
    fn nested_probes_bracket_and_exceptions_skip_return_value() {
        let (mut engine, main, _) = setup("fn f() { return 1 / 0 }\nf()");
        let log: Log = Default::default();
        let filter = SourceSectionFilter::builder()
            .tags_in(&[Tag::Statement, Tag::Call])
            .build()
            .unwrap();
        engine
            .attach_listener(
                filter,
                Rc::new(Recorder {
                    name: "a",
                    log: log.clone(),
                }),
            )
            .unwrap();
        assert!(engine.execute_root(main, Vec::new()).is_err());
        assert_eq!(
            *log.borrow(),
            [
                "a:enter fn f() { return 1 / 0 }",
                "a:return fn f() { return 1 / 0 } = <fn f>",
                "a:enter f()",
                "a:enter f()",
                "a:enter return 1 / 0",
                "a:throw return 1 / 0 runtime",
                "a:throw f() runtime",
                "a:throw f() runtime",
            ]
        );
    }

    struct Inputs(Log);

    impl ExecutionEventNode for Inputs {
        fn on_input_value(&self, cx: &mut EventCx<'_>, index: usize, value: &Value) -> ClientResult {
            self.0
                .borrow_mut()
                .push(alloc::format!("input({index},{})", cx.display(value)));
            Ok(())
        }
        fn on_return_value(&self, cx: &mut EventCx<'_>, value: &Value) -> ClientResult {
            let text = cx.context().section.text().to_string();
            self.0
                .borrow_mut()
                .push(alloc::format!("return {text} = {}", cx.display(value)));
            Ok(())
        }
        fn interests(&self) -> EventMask {
            EventMask::RETURN_VALUE.union(EventMask::INPUTS)
        }
    }

    struct InputsFactory(Log, Rc<Cell<usize>>);

    impl ExecutionEventNodeFactory for InputsFactory {
        fn create(
            &self,
            _cx: &mut FactoryCx<'_>,
        ) -> core::result::Result<Option<Rc<dyn ExecutionEventNode>>, ClientError> {
            self.1.set(self.1.get() + 1);
            Ok(Some(Rc::new(Inputs(self.0.clone()))))
        }
    }

    #[test]
    fn input_values_precede_the_return() {
        let (mut engine, main, _) = setup("x = 2 + 3");
        let log: Log = Default::default();
        let created = Rc::new(Cell::new(0));
        let filter = SourceSectionFilter::builder()
            .tag_is(Tag::Expression)
            .index_in(4, 9)
            .build()
            .unwrap();
        let b = engine
            .attach_factory(filter, Rc::new(InputsFactory(log.clone(), created.clone())))
            .unwrap();
        let before = engine.root(main).node_count();
        engine.execute_root(main, Vec::new()).unwrap();
        engine.execute_root(main, Vec::new()).unwrap();
        assert_eq!(
            log.borrow()[..5],
            [
                "return 2 = 2",
                "input(0,2)",
                "return 3 = 3",
                "input(1,3)",
                "return 2 + 3 = 5"
            ]
        );
        // one event node per location, reused across executions
        assert_eq!(created.get(), 3);
        assert!(engine.root(main).node_count() > before);
        engine.dispose(&b);
        engine.force_lazy_checks();
        assert_eq!(engine.root(main).wrapper_count(), 0);
    }

    struct Thrower;

    impl ExecutionEventListener for Thrower {
        fn on_enter(&self, _cx: &mut EventCx<'_>) -> ClientResult {
            Err("boom".into())
        }
        fn on_return_value(&self, _cx: &mut EventCx<'_>, _v: &Value) -> ClientResult {
            Err("bang".into())
        }
    }

    #[test]
    fn client_errors_are_isolated_and_reported() {
        let (mut engine, main, host) = setup("x = 1\nprint(x + 1)");
        let log: Log = Default::default();
        let t = engine.attach_listener(statements(), Rc::new(Thrower)).unwrap();
        engine
            .attach_listener(
                statements(),
                Rc::new(Recorder {
                    name: "b",
                    log: log.clone(),
                }),
            )
            .unwrap();
        engine.execute_root(main, Vec::new()).unwrap();
        assert_eq!(host.output(), "2\n");
        assert_eq!(log.borrow().len(), 4);
        let diags = host.diagnostics();
        assert_eq!(diags.len(), 4);
        assert_eq!(diags[0], alloc::format!("INSTRUMENT-ERROR {} t.toy:1:1 boom", t.id()));
        assert!(diags[1].ends_with("t.toy:1:1 bang"));
    }

    struct Loads(Log);

    impl LoadSourceListener for Loads {
        fn on_load(&self, source: &Rc<Source>) {
            self.0.borrow_mut().push(source.name().into());
        }
    }

    #[test]
    fn source_load_events() {
        let mut engine = Engine::new(Box::new(BufferHost::new()));
        engine.create_source("a.toy", "toylang", "", false).unwrap();
        engine.create_source("b.calc", "minicalc", "", false).unwrap();
        let log: Log = Default::default();
        let toy = SourceSectionFilter::builder().language_is("toylang").build().unwrap();
        let names: Vec<String> = engine.loaded_sources(&toy).iter().map(|s| s.name().into()).collect();
        assert_eq!(names, ["a.toy"]);
        engine
            .attach_load_source_listener(toy, Rc::new(Loads(log.clone())))
            .unwrap();
        engine.create_source("c.toy", "toylang", "", false).unwrap();
        engine.create_source("d.calc", "minicalc", "", false).unwrap();
        assert_eq!(*log.borrow(), ["c.toy"]);
    }

    #[test]
    fn probe_is_idempotent_and_transparent() {
        let (mut engine, main, host) = setup("print(1 + 2)");
        let r = engine.root(main);
        let stmt = r
            .program_nodes()
            .into_iter()
            .find(|&n| r.node(n).tags.contains(Tag::Statement))
            .unwrap();
        let p = engine.probe(main, stmt).unwrap();
        assert_eq!(engine.probe(main, stmt).unwrap(), p);
        engine.execute_root(main, Vec::new()).unwrap();
        assert_eq!(host.output(), "3\n");
    }

    #[test]
    fn attach_after_close_fails() {
        let (mut engine, _, _) = setup("x = 1");
        engine.close();
        assert!(matches!(
            engine.attach_listener(statements(), enter_listener(|_| Ok(()))),
            Err(Error::EngineClosed)
        ));
    }

    #[test]
    fn rewrites_under_a_wrapper_keep_the_event_stream() {
        let text = "fn add(a, b) { return a + b }\nadd(1, 2)\nadd(1.5, 2.0)\nadd(\"a\", \"b\")";
        let collect = |probe_exprs: bool| {
            let (mut engine, main, _) = setup(text);
            let log: Log = Default::default();
            let tags: &[Tag] = if probe_exprs {
                &[Tag::Statement, Tag::Expression]
            } else {
                &[Tag::Statement]
            };
            let filter = SourceSectionFilter::builder().tags_in(tags).build().unwrap();
            engine
                .attach_listener(
                    filter,
                    Rc::new(Recorder {
                        name: "a",
                        log: log.clone(),
                    }),
                )
                .unwrap();
            engine.execute_root(main, Vec::new()).unwrap();
            let out: Vec<String> = log.borrow().iter().filter(|l| l.contains("a + b")).cloned().collect();
            out
        };
        let with = collect(true);
        assert_eq!(
            with.iter()
                .filter(|l| l.starts_with("a:return a + b"))
                .cloned()
                .collect::<Vec<_>>(),
            ["a:return a + b = 3", "a:return a + b = 3.5", "a:return a + b = ab"]
        );
    }
}
