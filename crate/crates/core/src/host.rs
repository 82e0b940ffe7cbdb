//! Services the embedding environment provides to an engine.

use alloc::boxed::Box;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;
use core::cell::{Cell, RefCell};

use crate::interp::Engine;

pub trait Host {
    /// Guest program output (e.g. `print`).
    fn write_output(&mut self, text: &str);
    /// One line of the out-of-band diagnostics stream.
    fn write_diagnostic(&mut self, line: &str);
    /// Monotonic nanoseconds.
    fn monotonic_ns(&self) -> u64;
    /// Seconds for the guest `clock()` builtin.
    fn clock_seconds(&self) -> f64 {
        self.monotonic_ns() as f64 / 1e9
    }
}

/// Work submitted from other threads, applied at the next safepoint.
pub type Command = Box<dyn FnOnce(&mut Engine) + Send>;

pub trait CommandSource {
    /// Takes every queued command without blocking.
    fn drain(&mut self) -> Vec<Command>;
}

/// Runs a client callback, converting a host panic into an error message.
/// Hosts with unwinding install one via [`Engine::set_panic_guard`].
pub type PanicGuard = fn(&mut dyn FnMut()) -> Result<(), String>;

/// In-memory host: captures output and diagnostics, with a deterministic
/// clock advancing one microsecond per reading.
#[derive(Clone, Default)]
pub struct BufferHost {
    pub output: Rc<RefCell<String>>,
    pub diagnostics: Rc<RefCell<Vec<String>>>,
    ticks: Rc<Cell<u64>>,
}

impl BufferHost {
    pub fn new() -> BufferHost {
        BufferHost::default()
    }

    pub fn output(&self) -> String {
        self.output.borrow().clone()
    }

    pub fn diagnostics(&self) -> Vec<String> {
        self.diagnostics.borrow().clone()
    }
}

impl Host for BufferHost {
    fn write_output(&mut self, text: &str) {
        self.output.borrow_mut().push_str(text);
    }

    fn write_diagnostic(&mut self, line: &str) {
        self.diagnostics.borrow_mut().push(line.into());
    }

    fn monotonic_ns(&self) -> u64 {
        let t = self.ticks.get() + 1_000;
        self.ticks.set(t);
        t
    }
}

/// Host that discards output, for benchmarks.
#[derive(Default)]
pub struct NullHost {
    ticks: Cell<u64>,
}

impl Host for NullHost {
    fn write_output(&mut self, _text: &str) {}
    fn write_diagnostic(&mut self, _line: &str) {}
    fn monotonic_ns(&self) -> u64 {
        let t = self.ticks.get() + 1;
        self.ticks.set(t);
        t
    }
}
