//! Acceptance criteria A1–A9. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any failed.

use std::cell::RefCell;
use std::rc::Rc;
use std::time::Instant;

use probevm::bench::{self, BenchTable, Experiment};
use probevm::host::on_engine_thread;
use probevm_core::debugger::{DebugSession, ResumeAction, Suspension};
use probevm_core::host::BufferHost;
use probevm_core::interp::Engine;
use probevm_core::tools::{Coverage, TraceLog};
use probevm_oracle::checks;
use probevm_oracle::eval;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ratios(t: &BenchTable) -> String {
    t.experiment
        .columns()
        .iter()
        .skip(1)
        .map(|c| format!("{c}={:.3}", t.ratio(c)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn a1() -> Outcome {
    let start = Instant::now();
    let t = bench::run(Experiment::SetTrace, bench::DEFAULT_ITERATIONS, bench::WARMUP).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let summary = format!("{} in {secs:.1}s", ratios(&t));
    let ok = t.ratio("before") <= 1.05
        && t.ratio("empty") <= 3.0
        && t.ratio("increment") > t.ratio("empty")
        && t.ratio("after") <= 1.05
        && secs < 120.0;
    if ok {
        Ok(summary)
    } else {
        Err(format!("{summary}\n{}", t.render()))
    }
}

fn a2() -> Outcome {
    let t = bench::run(Experiment::Breakpoints, bench::DEFAULT_ITERATIONS, bench::WARMUP).map_err(|e| e.to_string())?;
    let summary = ratios(&t);
    let ok = t.ratio("not-taken") <= 1.05 && t.ratio("conditional") <= 1.5 && t.ratio("after") <= 1.05;
    if ok {
        Ok(summary)
    } else {
        Err(format!("{summary}\n{}", t.render()))
    }
}

fn seeds(base: u64, n: u64) -> impl Iterator<Item = u64> {
    (0..n).map(move |i| base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i))
}

fn a3() -> Outcome {
    for seed in seeds(3, 1000) {
        checks::maintenance(seed, 25)?;
    }
    Ok(format!(
        "1000 interleavings of 25 steps over {} sources",
        checks::MAINTENANCE_SOURCES.len()
    ))
}

fn a4() -> Outcome {
    for seed in seeds(4, 200) {
        checks::non_interference(seed, 0, false)?;
        checks::non_interference(seed, 1, false)?;
        checks::non_interference(seed, 3, false)?;
        checks::non_interference(seed, 3, true)?;
    }
    Ok("200 programs with 0, 1, 3 and 3+failing clients".into())
}

fn a5() -> Outcome {
    for seed in seeds(5, 200) {
        checks::bracketing_seeded(seed, false)?;
        checks::bracketing_seeded(seed, true)?;
    }
    for text in [
        "fn f(n) {\n  if n == 0 {\n    return 1 / n\n  }\n  return f(n - 1)\n}\nf(5)",
        "x = abs(\"s\")",
        "exit(2)",
    ] {
        checks::bracketing(text, true)?;
    }
    Ok("200 programs, with and without internal code".into())
}

const LOOP: &str = "\
x = 0
y = 0
n = 0
while x < 20 {
  x = x + 1
  y = x * 2
  n = n + 1
}
print(x)
print(y)
print(n)
";
const LOOP_BP_LINE: usize = 6;

/// `LOOP` with `stmt` inserted before the breakpoint line.
fn loop_with(stmt: &str) -> String {
    let mut lines: Vec<&str> = LOOP.lines().collect();
    lines.insert(LOOP_BP_LINE - 1, stmt);
    lines.join("\n") + "\n"
}

fn lookup(s: &Suspension<'_>, name: &str) -> Option<String> {
    let scopes = s.scopes(0).ok()?;
    let v = scopes
        .iter()
        .flat_map(|sc| sc.variables.iter())
        .find(|v| v.name == name)?;
    Some(s.engine().display_value("toylang", &v.value))
}

struct Stop {
    x: Option<String>,
    y: Option<String>,
    x_after_eval: Option<String>,
    suspensions: usize,
}

fn a6_breakpoint() -> Result<String, String> {
    // the evaluator stops where the condition first holds before the statement runs
    let probe = eval::run(&loop_with(
        "  if x > 10 {\n    print(x)\n    print(y)\n    exit(0)\n  }",
    ));
    let mut lines = probe.output.lines();
    let (want_x, want_y) = (
        lines.next().unwrap_or("").to_string(),
        lines.next().unwrap_or("").to_string(),
    );
    let edited = eval::run(&format!(
        "edited = 0\n{}",
        loop_with("  if x > 10 && edited == 0 {\n    x = 5\n    edited = 1\n  }")
    ));

    let host = BufferHost::new();
    let mut engine = Engine::new(Box::new(host.clone()));
    let stop = Rc::new(RefCell::new(Stop {
        x: None,
        y: None,
        x_after_eval: None,
        suspensions: 0,
    }));
    let st = stop.clone();
    let handler = move |s: &mut Suspension<'_>| {
        let mut st = st.borrow_mut();
        st.suspensions += 1;
        st.x = lookup(s, "x");
        st.y = lookup(s, "y");
        let _ = s.eval(0, "x = 5");
        st.x_after_eval = lookup(s, "x");
        let session = s.session();
        for bp in session.breakpoints() {
            session.remove_breakpoint(s.engine_mut(), bp.id);
        }
        ResumeAction::Continue
    };
    let session = DebugSession::start(&mut engine, Box::new(handler)).map_err(|e| e.to_string())?;
    let src = engine
        .create_source("loop.toy", "toylang", LOOP, false)
        .map_err(|e| e.to_string())?;
    session
        .set_breakpoint(&mut engine, "loop.toy", LOOP_BP_LINE, Some("x > 10"))
        .map_err(|e| e.to_string())?;
    let main = engine.load(&src).map_err(|e| e.to_string())?;
    engine.execute_root(main, Vec::new()).map_err(|e| e.to_string())?;
    let st = stop.borrow();
    if st.suspensions != 1 {
        return Err(format!("{} suspensions", st.suspensions));
    }
    if st.x.as_deref() != Some(want_x.as_str()) {
        return Err(format!("first suspension at x={:?}, expected {want_x}", st.x));
    }
    if st.y.as_deref() != Some(want_y.as_str()) {
        return Err(format!(
            "y={:?} at suspension, expected the previous iteration's {want_y}",
            st.y
        ));
    }
    if st.x_after_eval.as_deref() != Some("5") {
        return Err(format!("x={:?} in scopes after eval \"x = 5\"", st.x_after_eval));
    }
    if host.output() != edited.output {
        return Err(format!(
            "output after resume {:?}, expected {:?}",
            host.output(),
            edited.output
        ));
    }
    Ok(format!("first stop at x={want_x} with y={want_y}"))
}

fn a6() -> Outcome {
    let first = a6_breakpoint()?;
    for seed in seeds(6, 20) {
        checks::step_into_sequence(seed)?;
    }
    Ok(format!(
        "{first}; step_into matches on 20 programs; eval \"x = 5\" persists"
    ))
}

fn a7() -> Outcome {
    for seed in seeds(7, 200) {
        checks::coverage_counts(seed)?;
        checks::limiter(seed, seed % 60)?;
        checks::tools_together(seed)?;
    }
    for budget in [0, 1, 10, 1000, 100_000] {
        checks::limiter_infinite(budget)?;
    }
    Ok("coverage on 200 programs; limiter within budget+1; tools together match solo".into())
}

/// The language-independent parts: identical code for every frontend.
const SHARED_MODULES: [(&str, &str); 6] = [
    ("tools/coverage.rs", include_str!("../../core/src/tools/coverage.rs")),
    ("tools/trace.rs", include_str!("../../core/src/tools/trace.rs")),
    ("tools/profiler.rs", include_str!("../../core/src/tools/profiler.rs")),
    ("tools/limiter.rs", include_str!("../../core/src/tools/limiter.rs")),
    ("debugger.rs", include_str!("../../core/src/debugger.rs")),
    ("instrument.rs", include_str!("../../core/src/instrument.rs")),
];

struct Fixture {
    name: &'static str,
    language: &'static str,
    text: &'static str,
    output: &'static str,
    breakpoint: usize,
    eval: (&'static str, &'static str),
}

const FIXTURES: [Fixture; 2] = [
    Fixture {
        name: "debug.toy",
        language: "toylang",
        text: "x = 7\ny = x + 1\nprint(y)\n",
        output: "8\n",
        breakpoint: 2,
        eval: ("x", "7"),
    },
    Fixture {
        name: "debug.mc",
        language: "minicalc",
        text: "a = 2\nb = a * 3\nb - a\n(a + b) / 4\n",
        output: "4\n2\n",
        breakpoint: 3,
        eval: ("b", "6"),
    },
];

/// Coverage, trace and debugger on one fixture, through the same calls for
/// any language.
fn exercise(f: &Fixture) -> Result<(), String> {
    let err = |e: probevm_core::Error| format!("{}: {e}", f.name);
    let host = BufferHost::new();
    let mut engine = Engine::new(Box::new(host.clone()));
    let cov = Coverage::start(&mut engine).map_err(err)?;
    let trace = TraceLog::start(&mut engine).map_err(err)?;
    let lines_seen = Rc::new(RefCell::new(Vec::new()));
    let evals = Rc::new(RefCell::new(Vec::new()));
    let (ls, ev) = (lines_seen.clone(), evals.clone());
    let expr = f.eval.0;
    let handler = move |s: &mut Suspension<'_>| {
        ls.borrow_mut().push(s.context().section.start_line());
        if let Ok(out) = s.eval(0, expr) {
            ev.borrow_mut().push(out.display);
        }
        if ls.borrow().len() == 1 {
            ResumeAction::StepOver
        } else {
            ResumeAction::Continue
        }
    };
    let session = DebugSession::start(&mut engine, Box::new(handler)).map_err(err)?;
    let src = engine.create_source(f.name, f.language, f.text, false).map_err(err)?;
    let main = engine.load(&src).map_err(err)?;
    session
        .set_breakpoint(&mut engine, f.name, f.breakpoint, None)
        .map_err(err)?;
    engine.execute_root(main, Vec::new()).map_err(err)?;

    let statements = f.text.lines().count();
    let check = |what: &str, ok: bool| if ok { Ok(()) } else { Err(format!("{}: {what}", f.name)) };
    check("output", host.output() == f.output)?;
    let report = cov.report(&engine);
    let counts: Vec<u64> = report
        .source(f.name)
        .map(|s| s.statements.iter().map(|c| c.count).collect())
        .unwrap_or_default();
    check("coverage", counts == vec![1; statements])?;
    let traced: Vec<usize> = trace.entries().iter().map(|e| e.line).collect();
    check("trace", traced == (1..=statements).collect::<Vec<_>>())?;
    check(
        "suspension lines",
        *lines_seen.borrow() == vec![f.breakpoint, f.breakpoint + 1],
    )?;
    check("eval", evals.borrow().first().map(String::as_str) == Some(f.eval.1))?;
    Ok(())
}

fn a8() -> Outcome {
    for (path, text) in SHARED_MODULES {
        let text = text.split("#[cfg(test)]").next().unwrap_or(text);
        for needle in ["toylang", "minicalc", "lang::"] {
            if text.contains(needle) {
                return Err(format!("{path} refers to `{needle}`"));
            }
        }
    }
    for f in &FIXTURES {
        exercise(f)?;
    }
    Ok("coverage, trace and debugger identical on toylang and minicalc".into())
}

fn a9() -> Outcome {
    for seed in seeds(9, 500) {
        checks::filter_pair(seed)?;
    }
    Ok("500 filter/AST pairs".into())
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("A1", a1),
        ("A2", a2),
        ("A3", a3),
        ("A4", a4),
        ("A5", a5),
        ("A6", a6),
        ("A7", a7),
        ("A8", a8),
        ("A9", a9),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with('A')).collect();
    let mut failed = 0;
    for (id, f) in criteria {
        if !only.is_empty() && !only.iter().any(|o| o == id) {
            continue;
        }
        let start = Instant::now();
        let outcome = on_engine_thread(f);
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("{id} PASS ({secs:.1}s) {msg}"),
            Err(msg) => {
                failed += 1;
                println!("{id} FAIL ({secs:.1}s) {msg}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
