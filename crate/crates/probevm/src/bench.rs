//! Overhead experiments on the Mandelbrot fixture.
//!
//! `settrace` compares an uninstrumented engine with one that is traced by
//! an empty hook, then by guest code that increments a counter, then after
//! the hook is cleared. `breakpoints` does the same with a debug session:
//! no breakpoints, one on a line never reached, a conditional one on the
//! hottest line whose condition is always false, and none again.
//!
//! Every timed run of the instrumented engine is paired with a run of the
//! uninstrumented one, in alternating order, and each column is compared
//! with the runs it was paired with. Slow drift of the machine then cancels
//! out of the ratios.

use std::time::Instant;

use probevm_core::debugger::{DebugSession, ResumeAction, Suspension};
use probevm_core::host::NullHost;
use probevm_core::interp::Engine;
use probevm_core::node::RootId;
use probevm_core::tools::{clear_trace, set_trace, set_trace_code};
use probevm_core::Result;

pub const MANDELBROT: &str = include_str!("../fixtures/mandelbrot.toy");
pub const MANDELBROT_NAME: &str = "mandelbrot.toy";
pub const WARMUP: usize = 2;
pub const DEFAULT_ITERATIONS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    SetTrace,
    Breakpoints,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::SetTrace => "settrace",
            Experiment::Breakpoints => "breakpoints",
        }
    }

    pub fn columns(self) -> [&'static str; 5] {
        match self {
            Experiment::SetTrace => ["disabled", "before", "empty", "increment", "after"],
            Experiment::Breakpoints => ["disabled", "before", "not-taken", "conditional", "after"],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Column {
    pub name: &'static str,
    /// Seconds per timed iteration.
    pub samples: Vec<f64>,
    /// The uninstrumented runs paired with `samples`.
    pub baseline: Vec<f64>,
}

impl Column {
    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len().max(1) as f64
    }

    /// Sample standard deviation.
    pub fn stddev(&self) -> f64 {
        let n = self.samples.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        (self.samples.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64).sqrt()
    }

    /// Fastest iteration.
    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn baseline_min(&self) -> f64 {
        self.baseline.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn median(&self) -> f64 {
        let mut v = self.samples.clone();
        v.sort_by(f64::total_cmp);
        match v.len() {
            0 => 0.0,
            n if n % 2 == 1 => v[n / 2],
            n => (v[n / 2 - 1] + v[n / 2]) / 2.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchTable {
    pub experiment: Experiment,
    pub warmup: usize,
    pub columns: Vec<Column>,
}

impl BenchTable {
    pub fn column(&self, name: &str) -> &Column {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .unwrap_or_else(|| panic!("no column {name}"))
    }

    /// Fastest iteration of `name` over the fastest uninstrumented run
    /// paired with it.
    pub fn ratio(&self, name: &str) -> f64 {
        let c = self.column(name);
        c.min() / c.baseline_min()
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{} ({} warmup, {} timed iterations, seconds per iteration)\n",
            self.experiment.name(),
            self.warmup,
            self.columns.last().map_or(0, |c| c.samples.len())
        );
        for c in &self.columns {
            out.push_str(&format!("{:>12}", c.name));
        }
        out.push('\n');
        for c in &self.columns {
            out.push_str(&format!("{:>12}", format!("{:.4}", c.mean())));
        }
        out.push('\n');
        for c in &self.columns {
            out.push_str(&format!("{:>12}", format!("±{:.4}", c.stddev())));
        }
        out.push('\n');
        for c in &self.columns {
            out.push_str(&format!("{:>12}", format!("x{:.3}", self.ratio(c.name))));
        }
        out.push_str("  (fastest / fastest paired disabled)\n");
        out.push_str(&format!("after/disabled = {:.3}\n", self.ratio("after")));
        out
    }
}

fn line_of(text: &str, needle: &str) -> usize {
    text.lines()
        .position(|l| l.contains(needle))
        .map(|i| i + 1)
        .unwrap_or_else(|| panic!("fixture lacks {needle:?}"))
}

fn engine() -> Result<(Engine, RootId)> {
    let mut engine = Engine::new(Box::new(NullHost::default()));
    let src = engine.create_source(MANDELBROT_NAME, "toylang", MANDELBROT, false)?;
    let main = engine.load(&src)?;
    Ok((engine, main))
}

struct Bench {
    plain: Engine,
    plain_main: RootId,
    warmup: usize,
    iterations: usize,
}

fn time(engine: &mut Engine, main: RootId) -> Result<f64> {
    let t = Instant::now();
    engine.execute_root(main, Vec::new())?;
    Ok(t.elapsed().as_secs_f64())
}

impl Bench {
    /// Times `engine` in its current configuration, interleaved with the
    /// uninstrumented engine.
    fn measure(&mut self, engine: &mut Engine, main: RootId, name: &'static str) -> Result<Column> {
        let mut samples = Vec::with_capacity(self.iterations);
        let mut baseline = Vec::with_capacity(self.iterations);
        for i in 0..self.warmup + self.iterations {
            let (a, b) = if i % 2 == 0 {
                let b = time(&mut self.plain, self.plain_main)?;
                (time(engine, main)?, b)
            } else {
                let a = time(engine, main)?;
                (a, time(&mut self.plain, self.plain_main)?)
            };
            if i >= self.warmup {
                samples.push(a);
                baseline.push(b);
            }
        }
        Ok(Column {
            name,
            samples,
            baseline,
        })
    }
}

/// Runs the five configurations of `experiment`.
pub fn run(experiment: Experiment, iterations: usize, warmup: usize) -> Result<BenchTable> {
    let [c0, c1, c2, c3, c4] = experiment.columns();
    let (mut e, main) = engine()?;
    let (plain, plain_main) = engine()?;
    let mut b = Bench {
        plain,
        plain_main,
        warmup,
        iterations,
    };
    let mut columns = Vec::new();
    match experiment {
        Experiment::SetTrace => {
            columns.push(b.measure(&mut e, main, c1)?);
            let h = set_trace(&mut e, |_| {})?;
            columns.push(b.measure(&mut e, main, c2)?);
            clear_trace(&mut e, h);
            let h = set_trace_code(&mut e, "trace_count = trace_count + 1")?;
            columns.push(b.measure(&mut e, main, c3)?);
            clear_trace(&mut e, h);
            columns.push(b.measure(&mut e, main, c4)?);
        }
        Experiment::Breakpoints => {
            let handler = |_: &mut Suspension<'_>| ResumeAction::Continue;
            let session = DebugSession::start(&mut e, Box::new(handler))?;
            columns.push(b.measure(&mut e, main, c1)?);
            let never = line_of(MANDELBROT, "print(\"unreachable\")");
            let bp = session.set_breakpoint(&mut e, MANDELBROT_NAME, never, None)?;
            columns.push(b.measure(&mut e, main, c2)?);
            session.remove_breakpoint(&mut e, bp.id);
            let hot = line_of(MANDELBROT, "t = zr * zr");
            let bp = session.set_breakpoint(&mut e, MANDELBROT_NAME, hot, Some("i < 0"))?;
            columns.push(b.measure(&mut e, main, c3)?);
            session.remove_breakpoint(&mut e, bp.id);
            columns.push(b.measure(&mut e, main, c4)?);
            session.close(&mut e);
        }
    }
    let all: Vec<f64> = columns.iter().flat_map(|c| c.baseline.iter().copied()).collect();
    columns.insert(
        0,
        Column {
            name: c0,
            samples: all.clone(),
            baseline: all,
        },
    );
    Ok(BenchTable {
        experiment,
        warmup,
        columns,
    })
}
