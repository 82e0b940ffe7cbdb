//! Per-statement trace hook, the analog of Ruby's `set_trace_func`.

use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;
use core::cell::RefCell;

use crate::error::Result;
use crate::filter::SourceSectionFilter;
use crate::instrument::{
    ClientError, ClientResult, EventBinding, EventCx, EventMask, ExecutionEventListener, ExecutionEventNode,
    ExecutionEventNodeFactory, FactoryCx,
};
use crate::interp::{Engine, Fragment};
use crate::node::Tag;
use crate::source::SourceSection;

/// What a trace callback sees before a statement runs.
pub struct TraceEvent<'a, 'b> {
    cx: &'a EventCx<'b>,
}

impl TraceEvent<'_, '_> {
    pub fn section(&self) -> &SourceSection {
        &self.cx.context().section
    }

    pub fn root_name(&self) -> &str {
        &self.cx.context().root_name
    }

    /// Visible variables of the current frame as `(name, display)` pairs.
    /// Computed on demand.
    pub fn locals(&self) -> Vec<(String, String)> {
        let Ok(scopes) = self.cx.local_scopes(false) else {
            return Vec::new();
        };
        scopes
            .iter()
            .flat_map(|s| s.variables.iter())
            .map(|v| (v.name.clone(), self.cx.display(&v.value)))
            .collect()
    }
}

pub struct TraceHandle {
    binding: EventBinding,
}

impl TraceHandle {
    pub fn binding(&self) -> &EventBinding {
        &self.binding
    }
}

fn statements() -> Result<Rc<SourceSectionFilter>> {
    SourceSectionFilter::builder().tag_is(Tag::Statement).build()
}

struct Hook<F>(F);

impl<F: Fn(&TraceEvent<'_, '_>)> ExecutionEventListener for Hook<F> {
    fn on_enter(&self, cx: &mut EventCx<'_>) -> ClientResult {
        (self.0)(&TraceEvent { cx });
        Ok(())
    }

    fn interests(&self) -> EventMask {
        EventMask::ENTER
    }
}

/// Calls `callback` before every statement of non-internal sources.
pub fn set_trace<F>(engine: &mut Engine, callback: F) -> Result<TraceHandle>
where
    F: Fn(&TraceEvent<'_, '_>) + 'static,
{
    let binding = engine.attach_listener(statements()?, Rc::new(Hook(callback)))?;
    Ok(TraceHandle { binding })
}

struct CodeNode(Fragment);

impl ExecutionEventNode for CodeNode {
    fn on_enter(&self, cx: &mut EventCx<'_>) -> ClientResult {
        cx.execute_fragment(self.0)?;
        Ok(())
    }

    fn interests(&self) -> EventMask {
        EventMask::ENTER
    }
}

struct CodeFactory(String);

impl ExecutionEventNodeFactory for CodeFactory {
    fn create(&self, cx: &mut FactoryCx<'_>) -> core::result::Result<Option<Rc<dyn ExecutionEventNode>>, ClientError> {
        let fragment = cx.parse_inline(&self.0)?;
        Ok(Some(Rc::new(CodeNode(fragment))))
    }
}

/// Runs guest code `text` before every statement, in that statement's
/// lexical scope.
pub fn set_trace_code(engine: &mut Engine, text: &str) -> Result<TraceHandle> {
    let binding = engine.attach_factory(statements()?, Rc::new(CodeFactory(text.into())))?;
    Ok(TraceHandle { binding })
}

pub fn clear_trace(engine: &mut Engine, handle: TraceHandle) {
    engine.dispose(&handle.binding);
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEntry {
    pub source: String,
    pub line: usize,
    pub column: usize,
    pub root: String,
}

/// A trace hook that records every statement it sees.
pub struct TraceLog {
    handle: TraceHandle,
    entries: Rc<RefCell<Vec<TraceEntry>>>,
}

impl TraceLog {
    pub fn start(engine: &mut Engine) -> Result<TraceLog> {
        let entries: Rc<RefCell<Vec<TraceEntry>>> = Rc::default();
        let sink = entries.clone();
        let handle = set_trace(engine, move |ev| {
            let lc = ev.section().line_col();
            sink.borrow_mut().push(TraceEntry {
                source: ev.section().source().name().into(),
                line: lc.start_line,
                column: lc.start_col,
                root: ev.root_name().into(),
            });
        })?;
        Ok(TraceLog { handle, entries })
    }

    pub fn entries(&self) -> Vec<TraceEntry> {
        self.entries.borrow().clone()
    }

    pub fn stop(self, engine: &mut Engine) -> Vec<TraceEntry> {
        clear_trace(engine, self.handle);
        self.entries.take()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::host::BufferHost;
    use core::cell::Cell;

    fn engine(text: &str) -> (Engine, crate::node::RootId) {
        let mut engine = Engine::new(Box::new(BufferHost::new()));
        let src = engine.create_source("t.toy", "toylang", text, false).unwrap();
        let main = engine.load(&src).unwrap();
        (engine, main)
    }

    use alloc::boxed::Box;

    #[test]
    fn callback_per_statement() {
        let (mut engine, main) = engine("a = 1\nb = 2\nc = a + b");
        let n = Rc::new(Cell::new(0));
        let m = n.clone();
        let h = set_trace(&mut engine, move |_| m.set(m.get() + 1)).unwrap();
        engine.execute_root(main, Vec::new()).unwrap();
        assert_eq!(n.get(), 3);
        let before = n.get();
        clear_trace(&mut engine, h);
        engine.execute_root(main, Vec::new()).unwrap();
        assert_eq!(n.get(), before);
    }

    #[test]
    fn loop_counts_scale_with_iterations() {
        // 2 setup statements, then per iteration: the body's 2 statements
        let (mut engine, main) = engine("i = 0\nwhile i < 7 {\n  i = i + 1\n  j = i\n}");
        let n = Rc::new(Cell::new(0));
        let m = n.clone();
        set_trace(&mut engine, move |_| m.set(m.get() + 1)).unwrap();
        engine.execute_root(main, Vec::new()).unwrap();
        assert_eq!(n.get(), 7 * 2 + 2);
    }

    #[test]
    fn locals_snapshot_and_root_names() {
        let (mut engine, main) = engine("fn f(a) {\n  return a\n}\nx = f(4)");
        let seen: Rc<RefCell<Vec<String>>> = Rc::default();
        let s = seen.clone();
        set_trace(&mut engine, move |ev| {
            if ev.root_name() == "f" {
                let locals = ev.locals();
                s.borrow_mut()
                    .push(alloc::format!("{}:{:?}", ev.section().start_line(), locals));
            }
        })
        .unwrap();
        engine.execute_root(main, Vec::new()).unwrap();
        assert_eq!(*seen.borrow(), ["2:[(\"a\", \"4\")]"]);
    }

    #[test]
    fn guest_code_runs_in_scope() {
        let (mut engine, main) = engine("trace_count = 0\nfn f() {\n  y = 1\n}\nf()\nf()");
        set_trace_code(&mut engine, "trace_count = trace_count + 1").unwrap();
        engine.execute_root(main, Vec::new()).unwrap();
        let scopes = engine.find_top_scopes(false);
        let v = scopes[0].get("trace_count").unwrap().value.clone();
        // the run before the first statement fails: trace_count is unset there
        assert_eq!(v, crate::value::Value::Int(5));
        assert_eq!(engine.client_error_count(), 1);
    }

    #[test]
    fn clear_restores_the_tree() {
        let (mut engine, main) = engine("x = 1\ny = 2");
        let before = engine.root(main).node_count();
        let log = TraceLog::start(&mut engine).unwrap();
        engine.execute_root(main, Vec::new()).unwrap();
        let entries = log.stop(&mut engine);
        assert_eq!(entries.len(), 2);
        assert_eq!((entries[1].line, entries[1].column), (2, 1));
        engine.force_lazy_checks();
        assert_eq!(engine.root(main).node_count(), before);
    }
}
