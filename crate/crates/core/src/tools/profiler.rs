//! Counting profiler over root (function body) events.

use alloc::collections::BTreeMap;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;
use core::cell::{Cell, RefCell};

use super::{section_key, SectionKey};
use crate::error::Result;
use crate::exception::GuestException;
use crate::filter::SourceSectionFilter;
use crate::instrument::{
    ClientError, ClientResult, EventBinding, EventCx, ExecutionEventNode, ExecutionEventNodeFactory, FactoryCx,
};
use crate::interp::Engine;
use crate::node::Tag;
use crate::value::Value;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootProfile {
    pub name: String,
    pub source: String,
    pub line: usize,
    pub column: usize,
    /// Invocations, recursive ones included.
    pub count: u64,
    /// Time inside outermost activations, in monotonic nanoseconds.
    pub inclusive_ns: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ProfileReport {
    /// Roots that ran at least once, ordered by source and position.
    pub roots: Vec<RootProfile>,
}

impl ProfileReport {
    pub fn root(&self, name: &str) -> Option<&RootProfile> {
        self.roots.iter().find(|r| r.name == name)
    }
}

#[derive(Default)]
struct Stats {
    name: String,
    line: usize,
    column: usize,
    count: Cell<u64>,
    depth: Cell<u32>,
    started: Cell<u64>,
    total: Cell<u64>,
}

impl Stats {
    fn leave(&self, now: u64) {
        let d = self.depth.get().saturating_sub(1);
        self.depth.set(d);
        if d == 0 {
            self.total
                .set(self.total.get() + now.saturating_sub(self.started.get()));
        }
    }
}

type Table = Rc<RefCell<BTreeMap<SectionKey, Rc<Stats>>>>;

struct RootNodeStats(Rc<Stats>);

impl ExecutionEventNode for RootNodeStats {
    fn on_enter(&self, cx: &mut EventCx<'_>) -> ClientResult {
        let s = &self.0;
        s.count.set(s.count.get() + 1);
        if s.depth.get() == 0 {
            s.started.set(cx.engine().host().monotonic_ns());
        }
        s.depth.set(s.depth.get() + 1);
        Ok(())
    }

    fn on_return_value(&self, cx: &mut EventCx<'_>, _value: &Value) -> ClientResult {
        self.0.leave(cx.engine().host().monotonic_ns());
        Ok(())
    }

    fn on_return_exceptional(&self, cx: &mut EventCx<'_>, _e: &GuestException) -> ClientResult {
        self.0.leave(cx.engine().host().monotonic_ns());
        Ok(())
    }
}

struct StatsFactory(Table);

impl ExecutionEventNodeFactory for StatsFactory {
    fn create(&self, cx: &mut FactoryCx<'_>) -> core::result::Result<Option<Rc<dyn ExecutionEventNode>>, ClientError> {
        let section = &cx.context().section;
        let lc = section.line_col();
        let name = String::from(&*cx.context().root_name);
        let stats = self
            .0
            .borrow_mut()
            .entry(section_key(section))
            .or_insert_with(|| {
                Rc::new(Stats {
                    name,
                    line: lc.start_line,
                    column: lc.start_col,
                    ..Stats::default()
                })
            })
            .clone();
        Ok(Some(Rc::new(RootNodeStats(stats))))
    }
}

pub struct Profiler {
    binding: EventBinding,
    table: Table,
}

impl Profiler {
    pub fn start(engine: &mut Engine) -> Result<Profiler> {
        let filter = SourceSectionFilter::builder().tag_is(Tag::Root).build()?;
        let table: Table = Rc::default();
        let binding = engine.attach_factory(filter, Rc::new(StatsFactory(table.clone())))?;
        Ok(Profiler { binding, table })
    }

    pub fn report(&self) -> ProfileReport {
        let roots = self
            .table
            .borrow()
            .iter()
            .filter(|(_, s)| s.count.get() > 0)
            .map(|(key, s)| RootProfile {
                name: s.name.clone(),
                source: key.0.clone(),
                line: s.line,
                column: s.column,
                count: s.count.get(),
                inclusive_ns: s.total.get(),
            })
            .collect();
        ProfileReport { roots }
    }

    pub fn stop(self, engine: &mut Engine) -> ProfileReport {
        engine.dispose(&self.binding);
        self.report()
    }

    pub fn binding(&self) -> &EventBinding {
        &self.binding
    }
}
