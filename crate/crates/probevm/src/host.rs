//! Host services backed by the process: stdio, a monotonic clock and a
//! panic guard.

use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

use probevm_core::host::Host;

type Sink = Box<dyn FnMut(&str)>;

pub struct StdHost {
    start: Instant,
    output: Sink,
    diagnostics: Sink,
}

impl StdHost {
    /// Guest output to stdout, diagnostics to stderr.
    pub fn stdio() -> StdHost {
        StdHost::new(
            Box::new(|text| {
                let mut out = std::io::stdout().lock();
                let _ = out.write_all(text.as_bytes());
                let _ = out.flush();
            }),
            Box::new(|line| eprintln!("{line}")),
        )
    }

    pub fn new(output: Sink, diagnostics: Sink) -> StdHost {
        StdHost {
            start: Instant::now(),
            output,
            diagnostics,
        }
    }
}

impl Host for StdHost {
    fn write_output(&mut self, text: &str) {
        (self.output)(text)
    }

    fn write_diagnostic(&mut self, line: &str) {
        (self.diagnostics)(line)
    }

    fn monotonic_ns(&self) -> u64 {
        self.start.elapsed().as_nanos() as u64
    }
}

/// Runs `f`, turning a panic into its message.
pub fn catch_panic(f: &mut dyn FnMut()) -> Result<(), String> {
    panic::catch_unwind(AssertUnwindSafe(f)).map_err(|payload| {
        if let Some(s) = payload.downcast_ref::<&str>() {
            format!("host panic: {s}")
        } else if let Some(s) = payload.downcast_ref::<String>() {
            format!("host panic: {s}")
        } else {
            "host panic".to_string()
        }
    })
}

/// Stack size for threads that run guest code; deep guest recursion needs
/// deep host recursion.
pub const ENGINE_STACK_BYTES: usize = 1 << 30;

/// Runs `f` on a fresh thread with a large stack and waits for it.
pub fn on_engine_thread<T, F>(f: F) -> T
where
    T: Send + 'static,
    F: FnOnce() -> T + Send + 'static,
{
    std::thread::Builder::new()
        .name("probevm-engine".into())
        .stack_size(ENGINE_STACK_BYTES)
        .spawn(f)
        .expect("spawn engine thread")
        .join()
        .unwrap_or_else(|p| panic::resume_unwind(p))
}
