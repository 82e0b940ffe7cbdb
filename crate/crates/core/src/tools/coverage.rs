//! Statement coverage: one counter per statement location.

use alloc::collections::BTreeMap;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;
use core::cell::{Cell, RefCell};

use super::{section_key, SectionKey};
use crate::error::Result;
use crate::filter::SourceSectionFilter;
use crate::instrument::{
    ClientError, ClientResult, EventBinding, EventCx, EventMask, ExecutionEventNode, ExecutionEventNodeFactory,
    FactoryCx,
};
use crate::interp::Engine;
use crate::node::Tag;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StatementCount {
    pub line: usize,
    pub column: usize,
    pub end_line: usize,
    pub end_column: usize,
    pub char_start: usize,
    pub length: usize,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceCoverage {
    pub source: String,
    pub language: String,
    /// Ordered by position.
    pub statements: Vec<StatementCount>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CoverageReport {
    /// Ordered by source name.
    pub sources: Vec<SourceCoverage>,
}

impl CoverageReport {
    pub fn source(&self, name: &str) -> Option<&SourceCoverage> {
        self.sources.iter().find(|s| s.source == name)
    }
}

impl SourceCoverage {
    /// Count of the statement starting at `line`, `column`.
    pub fn count_at(&self, line: usize, column: usize) -> Option<u64> {
        self.statements
            .iter()
            .find(|s| s.line == line && s.column == column)
            .map(|s| s.count)
    }
}

type Counters = Rc<RefCell<BTreeMap<SectionKey, Rc<Cell<u64>>>>>;

struct Counter(Rc<Cell<u64>>);

impl ExecutionEventNode for Counter {
    fn on_enter(&self, _cx: &mut EventCx<'_>) -> ClientResult {
        self.0.set(self.0.get() + 1);
        Ok(())
    }

    fn interests(&self) -> EventMask {
        EventMask::ENTER
    }
}

struct CounterFactory(Counters);

impl ExecutionEventNodeFactory for CounterFactory {
    fn create(&self, cx: &mut FactoryCx<'_>) -> core::result::Result<Option<Rc<dyn ExecutionEventNode>>, ClientError> {
        let key = section_key(&cx.context().section);
        let cell = self.0.borrow_mut().entry(key).or_default().clone();
        Ok(Some(Rc::new(Counter(cell))))
    }
}

pub struct Coverage {
    binding: EventBinding,
    counters: Counters,
}

impl Coverage {
    /// Counts executions of every statement in non-internal sources.
    pub fn start(engine: &mut Engine) -> Result<Coverage> {
        let filter = SourceSectionFilter::builder().tag_is(Tag::Statement).build()?;
        let counters: Counters = Rc::default();
        let binding = engine.attach_factory(filter, Rc::new(CounterFactory(counters.clone())))?;
        Ok(Coverage { binding, counters })
    }

    /// Every statement location of every loaded source, executed or not.
    pub fn report(&self, engine: &Engine) -> CoverageReport {
        let counters = self.counters.borrow();
        let mut by_source: BTreeMap<String, SourceCoverage> = BTreeMap::new();
        let mut seen = alloc::collections::BTreeSet::new();
        for cx in engine.binding_locations(&self.binding) {
            let key = section_key(&cx.section);
            if !seen.insert(key.clone()) {
                continue;
            }
            let count = counters.get(&key).map_or(0, |c| c.get());
            let lc = cx.section.line_col();
            let entry = by_source.entry(key.0.clone()).or_insert_with(|| SourceCoverage {
                source: key.0.clone(),
                language: cx.source().language_id().into(),
                statements: Vec::new(),
            });
            entry.statements.push(StatementCount {
                line: lc.start_line,
                column: lc.start_col,
                end_line: lc.end_line,
                end_column: lc.end_col,
                char_start: key.1,
                length: key.2,
                count,
            });
        }
        let mut sources: Vec<SourceCoverage> = by_source.into_values().collect();
        for s in &mut sources {
            s.statements
                .sort_by_key(|st| (st.char_start, core::cmp::Reverse(st.length)));
        }
        CoverageReport { sources }
    }

    pub fn stop(self, engine: &mut Engine) -> CoverageReport {
        let report = self.report(engine);
        engine.dispose(&self.binding);
        report
    }

    pub fn binding(&self) -> &EventBinding {
        &self.binding
    }
}
