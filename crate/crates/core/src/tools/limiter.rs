//! Statement-count resource limit.
//!
//! The count includes statements of internal sources. The statement that
//! would exceed the budget is cancelled before it runs, so at most `budget`
//! statements execute.

use alloc::rc::Rc;
use core::cell::Cell;

use crate::error::Result;
use crate::filter::SourceSectionFilter;
use crate::instrument::{ClientResult, EventBinding, EventCx, EventMask, ExecutionEventListener};
use crate::interp::Engine;
use crate::node::Tag;

struct Meter {
    budget: u64,
    seen: Rc<Cell<u64>>,
}

impl ExecutionEventListener for Meter {
    fn on_enter(&self, cx: &mut EventCx<'_>) -> ClientResult {
        let n = self.seen.get() + 1;
        self.seen.set(n);
        if n > self.budget {
            cx.cancel(&alloc::format!("statement limit of {} exceeded", self.budget));
        }
        Ok(())
    }

    fn interests(&self) -> EventMask {
        EventMask::ENTER
    }
}

pub struct StatementLimit {
    binding: EventBinding,
    budget: u64,
    seen: Rc<Cell<u64>>,
}

/// Cancels execution once more than `budget` statements have started.
pub fn limit_statements(engine: &mut Engine, budget: u64) -> Result<StatementLimit> {
    let filter = SourceSectionFilter::builder()
        .tag_is(Tag::Statement)
        .include_internal(true)
        .build()?;
    let seen = Rc::new(Cell::new(0));
    let binding = engine.attach_listener(
        filter,
        Rc::new(Meter {
            budget,
            seen: seen.clone(),
        }),
    )?;
    Ok(StatementLimit { binding, budget, seen })
}

impl StatementLimit {
    /// Statements that started, including a cancelled one.
    pub fn observed(&self) -> u64 {
        self.seen.get()
    }

    /// Statements allowed to run.
    pub fn executed(&self) -> u64 {
        self.seen.get().min(self.budget)
    }

    pub fn exceeded(&self) -> bool {
        self.seen.get() > self.budget
    }

    /// Starts counting from zero again.
    pub fn reset(&self) {
        self.seen.set(0);
    }

    pub fn remove(self, engine: &mut Engine) {
        engine.dispose(&self.binding);
    }
}
