//! Seeded property checks shared by the core test suites and the acceptance
//! suite. Each returns `Err` with a description of the first mismatch.

use std::cell::{Cell, RefCell};
use std::rc::Rc;

use probevm_core::debugger::{DebugSession, ResumeAction, Suspension};
use probevm_core::exception::GuestException;
use probevm_core::filter::SourceSectionFilter;
use probevm_core::host::BufferHost;
use probevm_core::instrument::{
    enter_listener, BindingId, ClientError, ClientResult, EventBinding, EventCx, ExecutionEventListener,
    ExecutionEventNode, ExecutionEventNodeFactory, FactoryCx,
};
use probevm_core::interp::Engine;
use probevm_core::lang::toylang::syntax::Span;
use probevm_core::node::{NodeId, RootId, Tag};
use probevm_core::tools::{limit_statements, set_trace, Coverage, ProfileReport, Profiler};
use probevm_core::value::Value;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::eval::{self, Failure};
use crate::filter::FilterSpec;
use crate::gen::{program, terminating_program, GenConfig};
use crate::harness::{failure_of, run_engine, SOURCE_NAME};
use crate::rescan::expected_subscriptions;

macro_rules! ensure_eq {
    ($left:expr, $right:expr, $($ctx:tt)+) => {{
        let (l, r) = (&$left, &$right);
        if l != r {
            return Err(format!("{}\n  left: {:?}\n right: {:?}", format!($($ctx)+), l, r));
        }
    }};
}

macro_rules! ensure {
    ($cond:expr, $($ctx:tt)+) => {{
        if !$cond {
            return Err(format!($($ctx)+));
        }
    }};
}

pub type Check = Result<(), String>;

// ---- non-interference ----------------------------------------------------

/// Engine output and result match the evaluator with `recorders` statement
/// clients attached, each sees the evaluator's statement sequence, and a
/// failing client yields one diagnostic per event.
pub fn non_interference(seed: u64, recorders: usize, throwing: bool) -> Check {
    let text = terminating_program(seed, &GenConfig::default());
    let expected = eval::run(&text);
    let run = run_engine(&text, recorders, throwing);
    ensure_eq!(run.output, expected.output, "output of\n{text}");
    ensure_eq!(run.result, expected.result, "result of\n{text}");
    for trace in &run.traces {
        ensure_eq!(*trace, expected.statement_spans(), "statements of\n{text}");
    }
    let errors = if throwing { expected.trace.len() } else { 0 };
    ensure_eq!(run.diagnostics.len(), errors, "diagnostics of\n{text}");
    ensure!(
        run.diagnostics.iter().all(|d| d.starts_with("INSTRUMENT-ERROR ")),
        "unexpected diagnostic in {:?}",
        run.diagnostics
    );
    Ok(())
}

// ---- bracketing ----------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
enum Ev {
    Enter(RootId, NodeId),
    Exit(RootId, NodeId),
}

struct Brackets(Rc<RefCell<Vec<Ev>>>);

impl ExecutionEventListener for Brackets {
    fn on_enter(&self, cx: &mut EventCx<'_>) -> ClientResult {
        let c = cx.context();
        self.0.borrow_mut().push(Ev::Enter(c.root, c.node));
        Ok(())
    }
    fn on_return_value(&self, cx: &mut EventCx<'_>, _: &Value) -> ClientResult {
        let c = cx.context();
        self.0.borrow_mut().push(Ev::Exit(c.root, c.node));
        Ok(())
    }
    fn on_return_exceptional(&self, cx: &mut EventCx<'_>, _: &GuestException) -> ClientResult {
        let c = cx.context();
        self.0.borrow_mut().push(Ev::Exit(c.root, c.node));
        Ok(())
    }
}

fn balanced(events: &[Ev]) -> Check {
    let mut stack = Vec::new();
    for (i, e) in events.iter().enumerate() {
        match e {
            Ev::Enter(r, n) => stack.push((*r, *n)),
            Ev::Exit(r, n) => match stack.pop() {
                Some(top) if top == (*r, *n) => {}
                other => return Err(format!("event {i}: exit of {r:?}/{n:?} closes {other:?}")),
            },
        }
    }
    ensure!(stack.is_empty(), "{} unclosed", stack.len());
    Ok(())
}

/// Enter and return events over every tag nest properly, with exactly one
/// return per enter, whether the program succeeds or fails.
pub fn bracketing(text: &str, include_internal: bool) -> Check {
    let mut engine = Engine::new(Box::new(BufferHost::new()));
    let log = Rc::new(RefCell::new(Vec::new()));
    let filter = SourceSectionFilter::builder()
        .tags_in(&Tag::ALL)
        .include_internal(include_internal)
        .build()
        .map_err(|e| e.to_string())?;
    engine
        .attach_listener(filter, Rc::new(Brackets(log.clone())))
        .map_err(|e| e.to_string())?;
    let _ = engine.eval_source(SOURCE_NAME, "toylang", text);
    let events = log.borrow();
    ensure!(!events.is_empty() || text.trim().is_empty(), "no events for\n{text}");
    balanced(&events).map_err(|e| format!("{e}\n{text}"))
}

/// [`bracketing`] on a generated program that may fail at run time.
pub fn bracketing_seeded(seed: u64, include_internal: bool) -> Check {
    bracketing(&program(seed, &GenConfig::default()), include_internal)
}

// ---- filters -------------------------------------------------------------

/// A random filter against the nodes of random sources: `matches` equals
/// the brute-force predicate and `root_may_match` never prunes a match.
pub fn filter_pair(seed: u64) -> Check {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut engine = Engine::new(Box::new(BufferHost::new()));
    let names = ["a.toy", "b.toy", "c.calc"];
    let texts = [
        program(seed, &GenConfig::default()),
        program(seed ^ 0x5555, &GenConfig::default()),
        "x = 1 + 2\ny = x * (3 - 1)\ny / 2\n".to_string(),
    ];
    let mut lines = 1;
    let mut chars = 1;
    for (name, text) in names.iter().zip(&texts) {
        let lang = if name.ends_with(".calc") { "minicalc" } else { "toylang" };
        let src = engine
            .create_source(name, lang, text, false)
            .map_err(|e| e.to_string())?;
        engine.load(&src).map_err(|e| e.to_string())?;
        lines = lines.max(text.lines().count());
        chars = chars.max(text.chars().count());
    }
    let spec = FilterSpec::random(&mut rng, &["a.toy", "b.toy", "c.calc", "builtins.toy"], lines, chars);
    let filter = spec.build();
    for id in engine.root_ids() {
        let root = engine.root(id);
        let may = filter.root_may_match(root);
        for n in root.program_nodes() {
            let node = root.node(n);
            let expected = spec.matches_node(node);
            ensure_eq!(filter.matches(node), expected, "{spec:?} on {:?}", node.section);
            ensure!(
                !expected || may,
                "root {} pruned but {spec:?} matches {:?}",
                root.name,
                node.section
            );
        }
    }
    Ok(())
}

// ---- incremental maintenance ---------------------------------------------

pub const MAINTENANCE_SOURCES: [&str; 5] = ["s0.toy", "s1.toy", "s2.toy", "s3.toy", "calc.mc"];

struct Counter(Rc<Cell<u64>>);

impl ExecutionEventNode for Counter {
    fn on_enter(&self, _: &mut EventCx<'_>) -> ClientResult {
        self.0.set(self.0.get() + 1);
        Ok(())
    }
}

struct CounterFactory(Rc<Cell<u64>>);

impl ExecutionEventNodeFactory for CounterFactory {
    fn create(&self, _: &mut FactoryCx<'_>) -> Result<Option<Rc<dyn ExecutionEventNode>>, ClientError> {
        Ok(Some(Rc::new(Counter(self.0.clone()))))
    }
}

/// Random interleavings of loading, attaching listeners and factories,
/// disposing and executing. After every step the live subscriptions equal
/// a full rescan; once everything is disposed, node counts are restored.
pub fn maintenance(seed: u64, steps: usize) -> Check {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut engine = Engine::new(Box::new(BufferHost::new()));
    let cfg = GenConfig::default();
    let mut sources = Vec::new();
    for (i, name) in MAINTENANCE_SOURCES.iter().enumerate() {
        let (lang, text) = if name.ends_with(".mc") {
            ("minicalc", "a = 2\nb = a * 3\nb - a\n(a + b) / 4\n".to_string())
        } else {
            ("toylang", terminating_program(seed.wrapping_add(i as u64 * 7919), &cfg))
        };
        sources.push(
            engine
                .create_source(name, lang, &text, false)
                .map_err(|e| e.to_string())?,
        );
    }
    let mut loaded: Vec<(RootId, usize)> = engine.root_ids().map(|r| (r, engine.root(r).node_count())).collect();
    let mut live: Vec<(EventBinding, FilterSpec)> = Vec::new();
    let hits = Rc::new(Cell::new(0u64));
    for step in 0..steps {
        match rng.gen_range(0..12) {
            0..=2 => {
                let spec = FilterSpec::random(&mut rng, &MAINTENANCE_SOURCES, 12, 200);
                let hits = hits.clone();
                let listener = enter_listener(move |_| {
                    hits.set(hits.get() + 1);
                    Ok(())
                });
                let b = engine
                    .attach_listener(spec.build(), listener)
                    .map_err(|e| e.to_string())?;
                live.push((b, spec));
            }
            3 | 4 => {
                let spec = FilterSpec::random(&mut rng, &MAINTENANCE_SOURCES, 12, 200);
                let factory = Rc::new(CounterFactory(hits.clone()));
                let b = engine
                    .attach_factory(spec.build(), factory)
                    .map_err(|e| e.to_string())?;
                live.push((b, spec));
            }
            5 | 6 if !live.is_empty() => {
                let (b, _) = live.remove(rng.gen_range(0..live.len()));
                engine.dispose(&b);
            }
            7 | 8 => {
                let src = sources[rng.gen_range(0..sources.len())].clone();
                let before = engine.root_count();
                engine.load(&src).map_err(|e| e.to_string())?;
                for r in before..engine.root_count() {
                    let r = RootId(r as u32);
                    let wrappers = 2 * engine.root(r).wrapper_count();
                    loaded.push((r, engine.root(r).node_count() - wrappers));
                }
            }
            _ => {
                let name = MAINTENANCE_SOURCES[rng.gen_range(0..MAINTENANCE_SOURCES.len())];
                if let Some(main) = engine.program_root(name) {
                    let _ = engine.execute_root(main, Vec::new());
                }
            }
        }
        engine.force_lazy_checks();
        let specs: Vec<(BindingId, FilterSpec)> = live.iter().map(|(b, s)| (b.id(), s.clone())).collect();
        ensure_eq!(
            engine.live_subscriptions(),
            expected_subscriptions(&engine, &specs),
            "subscriptions after step {step} (seed {seed})"
        );
    }
    for (b, _) in live.drain(..) {
        engine.dispose(&b);
    }
    engine.force_lazy_checks();
    ensure!(
        engine.live_subscriptions().is_empty(),
        "subscriptions left after disposing all"
    );
    for (r, count) in loaded {
        ensure_eq!(
            engine.root(r).node_count(),
            count,
            "node count of root {}",
            engine.root(r).name
        );
    }
    Ok(())
}

// ---- tools ---------------------------------------------------------------

fn tool_engine() -> (Engine, BufferHost) {
    let host = BufferHost::new();
    (Engine::new(Box::new(host.clone())), host)
}

fn run_toy(engine: &mut Engine, text: &str) -> Result<String, Failure> {
    engine
        .eval_source(SOURCE_NAME, "toylang", text)
        .map(|v| probevm_core::lang::toylang::display(&v))
        .map_err(|e| failure_of(&e))
}

/// Coverage counts per statement equal the evaluator's counters.
pub fn coverage_counts(seed: u64) -> Check {
    let text = terminating_program(seed, &GenConfig::default());
    let expected = eval::run(&text);
    let (mut engine, _) = tool_engine();
    let cov = Coverage::start(&mut engine).map_err(|e| e.to_string())?;
    let _ = run_toy(&mut engine, &text);
    let report = cov.report(&engine);
    let src = report.source(SOURCE_NAME).ok_or("no coverage for the program")?;
    let parsed = probevm_core::lang::toylang::parse_program(&text).map_err(|e| format!("{e:?}"))?;
    ensure_eq!(
        src.statements.len(),
        parsed.statement_spans().len(),
        "statement count of\n{text}"
    );
    for s in &src.statements {
        let span = Span::new(s.char_start, s.length);
        let want = expected.counts.get(&span).copied().unwrap_or(0);
        ensure_eq!(s.count, want, "count of {span:?} in\n{text}");
    }
    Ok(())
}

/// The limiter cancels before the budget is exceeded by more than one
/// statement and otherwise leaves the run alone.
pub fn limiter(seed: u64, budget: u64) -> Check {
    let text = terminating_program(seed, &GenConfig::default());
    let expected = eval::run(&text);
    let (mut engine, _) = tool_engine();
    let limit = limit_statements(&mut engine, budget).map_err(|e| e.to_string())?;
    let result = run_toy(&mut engine, &text);
    ensure!(
        limit.observed() <= budget + 1,
        "observed {} with budget {budget}",
        limit.observed()
    );
    if limit.exceeded() {
        ensure_eq!(result, Err(Failure::Diverged), "limited run of\n{text}");
    } else {
        ensure_eq!(result, expected.result, "unlimited run of\n{text}");
    }
    Ok(())
}

/// The limiter on a loop that never ends.
pub fn limiter_infinite(budget: u64) -> Check {
    let (mut engine, _) = tool_engine();
    let limit = limit_statements(&mut engine, budget).map_err(|e| e.to_string())?;
    let result = engine.eval_source(SOURCE_NAME, "toylang", "i = 0\nwhile true {\n  i = i + 1\n}\n");
    let kind = match &result {
        Err(probevm_core::Error::Guest(g)) => Some(g.kind),
        _ => None,
    };
    ensure_eq!(
        kind,
        Some(probevm_core::ExceptionKind::Cancelled),
        "kind with budget {budget}"
    );
    ensure!(limit.exceeded(), "limit not reported exceeded");
    ensure!(
        limit.observed() <= budget + 1,
        "observed {} with budget {budget}",
        limit.observed()
    );
    Ok(())
}

fn profile_counts(r: &ProfileReport) -> Vec<(String, u64)> {
    r.roots.iter().map(|x| (x.name.clone(), x.count)).collect()
}

/// Coverage, profiler, limiter and a trace together leave the run unchanged
/// and report what each reports alone.
pub fn tools_together(seed: u64) -> Check {
    let text = terminating_program(seed, &GenConfig::default());
    let (mut solo, solo_host) = tool_engine();
    let solo_result = run_toy(&mut solo, &text);

    let (mut all, all_host) = tool_engine();
    let err = |e: probevm_core::Error| e.to_string();
    let cov = Coverage::start(&mut all).map_err(err)?;
    let prof = Profiler::start(&mut all).map_err(err)?;
    let limit = limit_statements(&mut all, 1_000_000).map_err(err)?;
    let traced = Rc::new(Cell::new(0u64));
    let t = traced.clone();
    let _trace = set_trace(&mut all, move |_| t.set(t.get() + 1)).map_err(err)?;
    let result = run_toy(&mut all, &text);
    ensure_eq!(result, solo_result, "result of\n{text}");
    ensure_eq!(all_host.output(), solo_host.output(), "output of\n{text}");
    ensure!(!limit.exceeded(), "limit exceeded");

    let (mut only_cov, _) = tool_engine();
    let c2 = Coverage::start(&mut only_cov).map_err(err)?;
    let _ = run_toy(&mut only_cov, &text);
    ensure_eq!(cov.report(&all), c2.report(&only_cov), "coverage of\n{text}");

    let (mut only_prof, _) = tool_engine();
    let p2 = Profiler::start(&mut only_prof).map_err(err)?;
    let _ = run_toy(&mut only_prof, &text);
    ensure_eq!(
        profile_counts(&prof.report()),
        profile_counts(&p2.report()),
        "profile of\n{text}"
    );

    let (mut only_limit, _) = tool_engine();
    let l2 = limit_statements(&mut only_limit, 1_000_000).map_err(err)?;
    let _ = run_toy(&mut only_limit, &text);
    ensure_eq!(limit.observed(), l2.observed(), "statements counted by the limiter");

    let (mut only_trace, _) = tool_engine();
    let traced2 = Rc::new(Cell::new(0u64));
    let t2 = traced2.clone();
    let _t = set_trace(&mut only_trace, move |_| t2.set(t2.get() + 1)).map_err(err)?;
    let _ = run_toy(&mut only_trace, &text);
    ensure_eq!(traced.get(), traced2.get(), "trace events");
    Ok(())
}

// ---- debugger ------------------------------------------------------------

fn span_of(s: &Suspension<'_>) -> Span {
    let sec = &s.context().section;
    Span::new(sec.char_start(), sec.length())
}

/// Stepping into from the first statement visits exactly the evaluator's
/// statement sequence.
pub fn step_into_sequence(seed: u64) -> Check {
    let text = terminating_program(seed, &GenConfig::default());
    let expected = eval::run(&text);
    let host = BufferHost::new();
    let mut engine = Engine::new(Box::new(host.clone()));
    let seen = Rc::new(RefCell::new(Vec::new()));
    let log = seen.clone();
    let handler = move |s: &mut Suspension<'_>| {
        log.borrow_mut().push(span_of(s));
        ResumeAction::StepInto
    };
    let session = DebugSession::start(&mut engine, Box::new(handler)).map_err(|e| e.to_string())?;
    let src = engine
        .create_source(SOURCE_NAME, "toylang", &text, false)
        .map_err(|e| e.to_string())?;
    let main = engine.load(&src).map_err(|e| e.to_string())?;
    session.pause(&mut engine).map_err(|e| e.to_string())?;
    let result = engine
        .execute_root(main, Vec::new())
        .map(|v| probevm_core::lang::toylang::display(&v))
        .map_err(|e| failure_of(&e));
    ensure_eq!(result, expected.result, "result of\n{text}");
    ensure_eq!(host.output(), expected.output, "output of\n{text}");
    ensure_eq!(*seen.borrow(), expected.statement_spans(), "step sequence of\n{text}");
    Ok(())
}
