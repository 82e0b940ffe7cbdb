//! Line-oriented terminal debugger (`probevm run --repl-debug`).
//!
//! The program stops before its first statement. End of input resumes it
//! to completion.

use std::cell::RefCell;
use std::io::{BufRead, Write};
use std::rc::Rc;

use probevm_core::debugger::{DebugSession, ResumeAction, Suspension};
use probevm_core::host::Host;

use crate::run::{exit_code_of, new_engine};

const HELP: &str = "\
break LINE [if COND]  (b)   set a breakpoint
delete ID             (d)   remove a breakpoint
continue              (c)   resume
step                  (s)   step into
next                  (n)   step over
finish                (o)   step out
where                 (bt)  show the stack
frame N               (f)   select a frame
scopes [N]            (v)   show variables of the selected or given frame
print EXPR            (p)   evaluate in the selected frame
list                  (l)   show source around the current line
kill                  (q)   terminate the program
help                  (h)   this text
";

struct Console {
    input: Box<dyn BufRead>,
    out: Box<dyn Write>,
    source: String,
}

impl Console {
    fn say(&mut self, text: &str) {
        let _ = writeln!(self.out, "{text}");
    }

    fn prompt(&mut self) -> Option<String> {
        let _ = write!(self.out, "(probevm) ");
        let _ = self.out.flush();
        let mut line = String::new();
        match self.input.read_line(&mut line) {
            Ok(0) | Err(_) => {
                let _ = writeln!(self.out);
                None
            }
            Ok(_) => Some(line.trim().to_string()),
        }
    }

    fn set_breakpoint(&mut self, session: &DebugSession, s: &mut Suspension<'_>, args: &str) {
        let (line, cond) = match args.split_once(" if ") {
            Some((l, c)) => (l.trim(), Some(c.trim())),
            None => (args.trim(), None),
        };
        let Ok(line) = line.parse::<usize>() else {
            self.say("usage: break LINE [if COND]");
            return;
        };
        let name = self.source.clone();
        match session.set_breakpoint(s.engine_mut(), &name, line, cond) {
            Ok(bp) => match bp.resolved_line() {
                Some(l) => self.say(&format!("breakpoint {} at {name}:{l}", bp.id)),
                None => self.say(&format!("breakpoint {} unresolved", bp.id)),
            },
            Err(e) => self.say(&format!("error: {e}")),
        }
    }

    fn show_location(&mut self, s: &Suspension<'_>, frame: usize) {
        let stack = s.stack();
        let Some(f) = stack.get(frame) else { return };
        let Some(section) = &f.section else {
            self.say(&format!("in {}", f.name));
            return;
        };
        let lc = section.line_col();
        let text = section.source().text().lines().nth(lc.start_line - 1).unwrap_or("");
        self.say(&format!("{:>4} | {text}", lc.start_line));
    }

    fn list(&mut self, s: &Suspension<'_>, frame: usize) {
        let stack = s.stack();
        let Some(section) = stack.get(frame).and_then(|f| f.section.clone()) else {
            return;
        };
        let current = section.line_col().start_line;
        let lo = current.saturating_sub(3).max(1);
        for (i, text) in section.source().text().lines().enumerate().skip(lo - 1).take(7) {
            let marker = if i + 1 == current { '>' } else { ' ' };
            self.say(&format!("{marker}{:>4} | {text}", i + 1));
        }
    }

    fn where_(&mut self, s: &Suspension<'_>, selected: usize) {
        for (i, f) in s.stack().iter().enumerate() {
            let marker = if i == selected { '*' } else { ' ' };
            let at = match (f.source_name(), f.position()) {
                (Some(src), Some((l, c))) => format!("{src}:{l}:{c}"),
                _ => "?".into(),
            };
            self.say(&format!("{marker}#{i} {} at {at}", f.name));
        }
    }

    fn scopes(&mut self, s: &Suspension<'_>, frame: usize) {
        let lang = s.context().language_id.clone();
        match s.scopes(frame) {
            Ok(scopes) => {
                for sc in scopes {
                    self.say(&format!("{}:", sc.name));
                    for v in sc.variables.iter().filter(|v| !v.internal) {
                        let shown = s.engine().display_value(&lang, &v.value);
                        self.say(&format!("  {} = {shown}", v.name));
                    }
                }
            }
            Err(e) => self.say(&format!("error: {e}")),
        }
    }

    fn suspended(&mut self, session: &DebugSession, s: &mut Suspension<'_>) -> ResumeAction {
        let stack = s.stack();
        let reason = s.reason().as_str();
        let at = match stack.first().and_then(|f| f.position()) {
            Some((l, c)) => format!("{}:{l}:{c}", self.source),
            None => "?".into(),
        };
        let name = stack.first().map(|f| f.name.as_str()).unwrap_or("?");
        self.say(&format!("stopped ({reason}) in {name} at {at}"));
        self.show_location(s, 0);
        let mut frame = 0;
        loop {
            let Some(line) = self.prompt() else {
                return ResumeAction::Continue;
            };
            let (cmd, args) = line.split_once(' ').unwrap_or((&line, ""));
            let args = args.trim();
            match cmd {
                "" => {}
                "c" | "continue" => return ResumeAction::Continue,
                "s" | "step" => return ResumeAction::StepInto,
                "n" | "next" => return ResumeAction::StepOver,
                "o" | "finish" => return ResumeAction::StepOut,
                "q" | "kill" => return ResumeAction::Terminate,
                "b" | "break" => self.set_breakpoint(session, s, args),
                "d" | "delete" => match args.parse::<u32>() {
                    Ok(id) if session.remove_breakpoint(s.engine_mut(), id) => {
                        self.say(&format!("deleted breakpoint {id}"))
                    }
                    Ok(id) => self.say(&format!("no breakpoint {id}")),
                    Err(_) => self.say("usage: delete ID"),
                },
                "bt" | "where" => self.where_(s, frame),
                "f" | "frame" => match args.parse::<usize>() {
                    Ok(n) if n < s.stack().len() => {
                        frame = n;
                        self.show_location(s, frame);
                    }
                    _ => self.say("no such frame"),
                },
                "v" | "scopes" => {
                    let n = if args.is_empty() {
                        Ok(frame)
                    } else {
                        args.parse::<usize>()
                    };
                    match n {
                        Ok(n) if n < s.stack().len() => self.scopes(s, n),
                        _ => self.say("no such frame"),
                    }
                }
                "p" | "print" => match s.eval(frame, args) {
                    Ok(v) => self.say(&v.display),
                    Err(e) => self.say(&format!("error: {e}")),
                },
                "l" | "list" => self.list(s, frame),
                "h" | "help" => {
                    let _ = write!(self.out, "{HELP}");
                }
                other => self.say(&format!("unknown command `{other}`; try `help`")),
            }
        }
    }
}

/// Debugs one program interactively; returns its exit code.
pub fn run(
    host: Box<dyn Host>,
    name: &str,
    language_id: &str,
    text: &str,
    input: Box<dyn BufRead>,
    out: Box<dyn Write>,
) -> i32 {
    let mut engine = new_engine(host);
    let console = Rc::new(RefCell::new(Console {
        input,
        out,
        source: name.into(),
    }));
    let c = console.clone();
    let handler = move |s: &mut Suspension<'_>| {
        let session = s.session();
        c.borrow_mut().suspended(&session, s)
    };
    let session = match DebugSession::start(&mut engine, Box::new(handler)) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("probevm: {e}");
            return 1;
        }
    };
    let result = engine
        .create_source(name, language_id, text, false)
        .and_then(|src| engine.load(&src))
        .and_then(|main| {
            session.pause(&mut engine)?;
            engine.execute_root(main, Vec::new())
        });
    session.close(&mut engine);
    let (code, error) = exit_code_of(&result);
    let mut con = console.borrow_mut();
    match error {
        Some(e) => con.say(&format!("program failed: {e}")),
        None => con.say(&format!("program exited with code {code}")),
    }
    code
}

#[cfg(test)]
mod tests {
    use super::*;
    use probevm_core::host::BufferHost;
    use std::sync::{Arc, Mutex};

    #[derive(Clone, Default)]
    struct Shared(Arc<Mutex<Vec<u8>>>);

    impl Write for Shared {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            self.0.lock().unwrap().extend_from_slice(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    fn session(program: &str, commands: &str) -> (i32, String) {
        let out = Shared::default();
        let code = run(
            Box::new(BufferHost::new()),
            "t.toy",
            "toylang",
            program,
            Box::new(std::io::Cursor::new(commands.to_string())),
            Box::new(out.clone()),
        );
        let text = String::from_utf8(out.0.lock().unwrap().clone()).unwrap();
        (code, text)
    }

    #[test]
    fn breaks_inspects_and_edits() {
        let program = "x = 7\ny = x + 1\nprint(y)\n";
        let (code, out) = session(program, "b 3\nc\np y\np y = 1\np y\nv\nc\n");
        assert_eq!(code, 0);
        assert!(out.contains("stopped (step) in main at t.toy:1:1"), "{out}");
        assert!(out.contains("breakpoint 1 at t.toy:3"), "{out}");
        assert!(out.contains("stopped (breakpoint) in main at t.toy:3:1"), "{out}");
        assert!(out.contains("(probevm) 8\n"), "{out}");
        assert!(out.contains("  y = 1"), "{out}");
        assert!(out.contains("program exited with code 0"), "{out}");
    }

    #[test]
    fn steps_and_kills() {
        let program = "fn f(a) {\n  return a * 2\n}\nx = f(3)\nprint(x)\n";
        let (code, out) = session(program, "n\ns\nbt\nq\n");
        assert_eq!(code, 1);
        assert!(out.contains("stopped (step) in main at t.toy:4:1"), "{out}");
        assert!(out.contains("stopped (step) in f at t.toy:2:3"), "{out}");
        assert!(out.contains("*#0 f at t.toy:2:3"), "{out}");
        assert!(out.contains("#1 main at t.toy:4:"), "{out}");
        assert!(out.contains("program failed:"), "{out}");
    }

    #[test]
    fn end_of_input_runs_to_completion() {
        let (code, out) = session("print(1)\nexit(3)\n", "");
        assert_eq!(code, 3);
        assert!(out.contains("program exited with code 3"), "{out}");
    }
}
