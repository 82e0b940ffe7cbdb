use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use probevm_oracle::eval::{self, Limits};
use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_probevm"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn scratch(name: &str, text: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("probevm-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str], file: &Path) -> Output {
    bin().arg("run").args(args).arg(file).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn mandelbrot_matches_reference_evaluator() {
    let text = std::fs::read_to_string(fixture("mandelbrot.toy")).unwrap();
    let want = eval::run_with(
        &text,
        &Limits {
            statements: 100_000_000,
            depth: 200,
        },
    );
    assert_eq!(want.result, Ok("null".into()));
    let o = run(&[], &fixture("mandelbrot.toy"));
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o), want.output);
    assert!(stdout(&o).ends_with("\n15909\n"));
}

#[test]
fn tools_leave_output_unchanged_and_report_json() {
    let p = scratch(
        "tools.toy",
        "fn sq(n) {\n  return n * n\n}\ni = 0\nwhile i < 3 {\n  print(sq(i))\n  i = i + 1\n}\n",
    );
    let plain = run(&[], &p);
    let o = run(&["--coverage", "--profile", "--trace"], &p);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let (guest, report) = out.rsplit_once("\n{").unwrap();
    assert_eq!(format!("{guest}\n"), stdout(&plain));
    let report: Value = serde_json::from_str(&format!("{{{report}")).unwrap();
    let stmts = &report["coverage"]["sources"][0]["statements"];
    let counts: Vec<u64> = stmts
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["count"].as_u64().unwrap())
        .collect();
    // fn declaration, return, i = 0, while, print, increment
    assert_eq!(counts, vec![1, 3, 1, 1, 3, 3]);
    assert_eq!(
        stmts[1],
        json!({"line": 2, "column": 3, "endLine": 2, "endColumn": 14, "charStart": 13, "length": 12, "count": 3})
    );
    let roots = report["profile"]["roots"].as_array().unwrap();
    let sq = roots.iter().find(|r| r["name"] == "sq").unwrap();
    assert_eq!(sq["count"], 3);
    assert_eq!(report["trace"]["statements"], 12);
    assert_eq!(
        report["trace"]["entries"][1],
        json!({"source": "tools.toy", "line": 4, "column": 1, "root": "main"})
    );
    assert_eq!(
        report["trace"]["entries"][3],
        json!({"source": "tools.toy", "line": 6, "column": 3, "root": "main"})
    );
    assert_eq!(
        report["trace"]["entries"][4],
        json!({"source": "tools.toy", "line": 2, "column": 3, "root": "sq"})
    );
}

#[test]
fn statement_limit_cancels() {
    let p = scratch("limit.toy", "i = 0\nwhile true {\n  i = i + 1\n}\n");
    let o = run(&["--limit-statements", "0"], &p);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cancelled"), "{}", stderr(&o));
    let o = run(&["--limit-statements", "1000"], &p);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cancelled"));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&[], &scratch("ok.toy", "print(1)\n")).status.code(), Some(0));
    assert_eq!(run(&[], &scratch("exit.toy", "exit(7)\n")).status.code(), Some(7));
    let o = run(&[], &scratch("bad.toy", "x = (\n"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("syntax error"), "{}", stderr(&o));
    let o = run(&[], &scratch("div.toy", "print(1 / 0)\n"));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("runtime error"), "{}", stderr(&o));
    assert_eq!(run(&[], Path::new("/nonexistent/x.toy")).status.code(), Some(2));
    assert_eq!(bin().args(["run"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["frobnicate"]).output().unwrap().status.code(), Some(2));
    assert_eq!(
        run(&["--limit-statements", "many"], &scratch("ok2.toy", ""))
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn language_by_extension_or_flag() {
    let p = scratch("calc.mc", "x = 2 * 3\nx + 1\n");
    let o = run(&[], &p);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let as_toy = run(&["--lang", "toylang"], &p);
    let as_calc = run(&["--lang", "minicalc"], &scratch("calc.txt", "x = 2 * 3\nx + 1\n"));
    assert_eq!(stdout(&as_calc), stdout(&o));
    assert_eq!(as_toy.status.code(), Some(0));
}

#[test]
fn repl_debug_session() {
    let mut child = bin()
        .args(["run", "--repl-debug"])
        .arg(fixture("debug.toy"))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(b"b 3\nc\np y * 2\nc\n").unwrap();
    let o = child.wait_with_output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "8\n");
    let err = stderr(&o);
    assert!(err.contains("(probevm) 16\n"), "{err}");
}

#[test]
fn debug_port_serves_one_session() {
    let mut child = bin()
        .args(["run", "--debug-port", "0"])
        .arg(fixture("debug.toy"))
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut err = BufReader::new(child.stderr.take().unwrap());
    let mut line = String::new();
    err.read_line(&mut line).unwrap();
    let url = line
        .split_whitespace()
        .find(|w| w.starts_with("ws://"))
        .expect(&line)
        .to_string();
    let (mut ws, _) = tungstenite::connect(url).unwrap();
    ws.send(tungstenite::Message::Text(
        r#"{"id":1,"method":"run","params":{"source":"debug.toy","args":[]}}"#.into(),
    ))
    .unwrap();
    loop {
        let msg = ws.read().unwrap();
        if msg.to_text().unwrap().contains("terminated") {
            break;
        }
    }
    ws.close(None).unwrap();
    while ws.read().is_ok() {}
    let o = child.wait_with_output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "8\n");
}

#[test]
fn bench_rejects_unknown_experiment() {
    assert_eq!(
        bin().args(["bench", "nothing"]).output().unwrap().status.code(),
        Some(2)
    );
}
