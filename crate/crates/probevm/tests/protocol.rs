mod support;

use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::PathBuf;
use std::time::Duration;

use probevm::server::{DebugServer, ServerConfig};
use serde_json::{json, Value};
use support::{normalize, server, toy, Client, DEBUG_TOY};

fn transcript_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/transcripts")
        .join(format!("{name}.jsonl"))
}

/// Compares against the stored transcript; `PROBEVM_BLESS=1` rewrites it.
fn check_transcript(name: &str, client: &Client) {
    let got = normalize(&client.transcript);
    let path = transcript_path(name);
    if std::env::var_os("PROBEVM_BLESS").is_some() {
        std::fs::write(&path, &got).unwrap();
        return;
    }
    let want = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(got, want, "transcript {name} differs");
}

fn debug_server() -> DebugServer {
    server(vec![toy("debug.toy", DEBUG_TOY)])
}

#[test]
fn transcript_breakpoint_hit() {
    let srv = debug_server();
    let mut c = Client::connect(srv.local_addr());
    let bp = c.call("bp.set", json!({"source": "debug.toy", "line": 2})).unwrap();
    assert_eq!(bp, json!({"id": 1, "resolved": true}));
    assert_eq!(c.event("bp.resolved"), json!({"id": 1, "line": 2}));
    c.call("run", json!({"source": "debug.toy", "args": []})).unwrap();
    let s = c.event("suspended");
    assert_eq!(s["reason"], "breakpoint");
    assert_eq!(
        s["stack"],
        json!([{"name": "main", "source": "debug.toy", "line": 2, "col": 1}])
    );
    c.call("resume", Value::Null).unwrap();
    c.event("resumed");
    assert_eq!(c.event("output"), json!({"text": "8\n"}));
    assert_eq!(c.event("terminated"), json!({"exitCode": 0}));
    check_transcript("breakpoint-hit", &c);
}

#[test]
fn transcript_eval() {
    let srv = debug_server();
    let mut c = Client::connect(srv.local_addr());
    c.call("bp.set", json!({"source": "debug.toy", "line": 2})).unwrap();
    c.event("bp.resolved");
    c.call("run", json!({"source": "debug.toy", "args": []})).unwrap();
    c.event("suspended");
    let v = c.call("eval", json!({"frameIndex": 0, "text": "x"})).unwrap();
    assert_eq!(v, json!({"value": "7", "type": "Int"}));
    c.call("resume", Value::Null).unwrap();
    c.event("resumed");
    c.event("output");
    assert_eq!(c.event("terminated"), json!({"exitCode": 0}));
    check_transcript("eval", &c);
}

#[test]
fn transcript_step() {
    let srv = debug_server();
    let mut c = Client::connect(srv.local_addr());
    c.call("bp.set", json!({"source": "debug.toy", "line": 2})).unwrap();
    c.event("bp.resolved");
    c.call("run", json!({"source": "debug.toy", "args": []})).unwrap();
    assert_eq!(c.event("suspended")["stack"][0]["line"], 2);
    c.call("stepOver", Value::Null).unwrap();
    c.event("resumed");
    let s = c.event("suspended");
    assert_eq!(s["reason"], "step");
    assert_eq!(s["stack"][0]["line"], 3);
    let stack = c.call("stack", Value::Null).unwrap();
    assert_eq!(stack["frames"], s["stack"]);
    c.call("resume", Value::Null).unwrap();
    c.event("resumed");
    c.event("output");
    c.event("terminated");
    check_transcript("step", &c);
}

#[test]
fn scopes_flag_internal_slots() {
    let srv = server(vec![toy("t.toy", "fn f(x) { return x }\na = f(1) + f(2)\nprint(a)\n")]);
    let mut c = Client::connect(srv.local_addr());
    c.call("bp.set", json!({"source": "t.toy", "line": 3})).unwrap();
    c.call("run", json!({"source": "t.toy", "args": []})).unwrap();
    c.event("suspended");
    let scopes = c.call("scopes", json!({"frameIndex": 0})).unwrap();
    let vars = scopes["scopes"][0]["variables"].as_array().unwrap().clone();
    let flags: Vec<(&str, bool)> = vars
        .iter()
        .map(|v| (v["name"].as_str().unwrap(), v["internal"].as_bool().unwrap()))
        .collect();
    assert_eq!(flags, [("f", false), ("a", false), ("$tmp0", true)]);
    let stack = c.call("stack", Value::Null).unwrap();
    assert_eq!(stack["frames"].as_array().unwrap().len(), 1);
    c.call("resume", Value::Null).unwrap();
    c.event("terminated");
}

#[test]
fn eval_assignment_and_scopes() {
    let srv = debug_server();
    let mut c = Client::connect(srv.local_addr());
    c.call("bp.set", json!({"source": "debug.toy", "line": 3})).unwrap();
    c.call("run", json!({"source": "debug.toy", "args": []})).unwrap();
    c.event("suspended");
    let scopes = c.call("scopes", json!({"frameIndex": 0})).unwrap();
    let vars = &scopes["scopes"][0]["variables"];
    assert!(
        vars.as_array()
            .unwrap()
            .contains(&json!({"name": "y", "value": "8", "type": "Int", "internal": false})),
        "{scopes}"
    );
    c.call("eval", json!({"frameIndex": 0, "text": "y = 41 + 1"})).unwrap();
    let err = c
        .call("eval", json!({"frameIndex": 0, "text": "nosuchvar"}))
        .unwrap_err();
    assert_eq!(err["code"], 1003);
    assert_eq!(c.call("scopes", json!({"frameIndex": 5})).unwrap_err()["code"], -32602);
    c.call("resume", Value::Null).unwrap();
    assert_eq!(c.event("output"), json!({"text": "42\n"}));
    c.event("terminated");
}

#[test]
fn conditional_breakpoint_and_step_out() {
    let program = "fn f(n) {\n  return n * 2\n}\ni = 0\nwhile i < 20 {\n  i = i + 1\n  r = f(i)\n}\nprint(r)\n";
    let srv = server(vec![toy("loop.toy", program)]);
    let mut c = Client::connect(srv.local_addr());
    c.call(
        "bp.set",
        json!({"source": "loop.toy", "line": 2, "condition": "n > 10"}),
    )
    .unwrap();
    c.call("run", json!({"source": "loop.toy", "args": []})).unwrap();
    let s = c.event("suspended");
    assert_eq!(s["stack"][0]["name"], "f");
    assert_eq!(s["stack"][1]["line"], 7);
    assert_eq!(
        c.call("eval", json!({"frameIndex": 0, "text": "n"})).unwrap()["value"],
        "11"
    );
    assert_eq!(
        c.call("eval", json!({"frameIndex": 1, "text": "i"})).unwrap()["value"],
        "11"
    );
    c.call("bp.remove", json!({"id": 1})).unwrap();
    assert_eq!(c.call("bp.remove", json!({"id": 1})).unwrap_err()["code"], -32602);
    c.call("stepOut", Value::Null).unwrap();
    let s = c.event("suspended");
    assert_eq!(s["stack"][0]["name"], "main");
    c.call("resume", Value::Null).unwrap();
    assert_eq!(c.event("output"), json!({"text": "40\n"}));
    assert_eq!(c.event("terminated"), json!({"exitCode": 0}));
}

#[test]
fn sources_and_coverage() {
    let srv = server(vec![toy("debug.toy", DEBUG_TOY), toy("other.toy", "print(1)\n")]);
    let mut c = Client::connect(srv.local_addr());
    let list = c.call("sources.list", Value::Null).unwrap();
    assert_eq!(
        list,
        json!({"sources": [{"name": "debug.toy", "language": "toylang"}, {"name": "other.toy", "language": "toylang"}]})
    );
    let src = c.call("source.get", json!({"name": "debug.toy"})).unwrap();
    assert_eq!(src["text"], DEBUG_TOY);
    assert_eq!(
        c.call("source.get", json!({"name": "nope"})).unwrap_err()["code"],
        -32602
    );
    c.call("run", json!({"source": "debug.toy", "args": []})).unwrap();
    c.event("terminated");
    let cov = c.call("coverage.report", Value::Null).unwrap();
    let debug = cov["sources"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["source"] == "debug.toy")
        .unwrap();
    let counts: Vec<i64> = debug["statements"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["count"].as_i64().unwrap())
        .collect();
    assert_eq!(counts, vec![1, 1, 1]);
}

#[test]
fn trace_events_are_output() {
    let srv = debug_server();
    let mut c = Client::connect(srv.local_addr());
    c.call("trace.enable", Value::Null).unwrap();
    c.call("run", json!({"source": "debug.toy", "args": []})).unwrap();
    assert_eq!(c.event("output"), json!({"text": "trace debug.toy:1:1 main\n"}));
    assert_eq!(c.event("output"), json!({"text": "trace debug.toy:2:1 main\n"}));
    assert_eq!(c.event("output"), json!({"text": "trace debug.toy:3:1 main\n"}));
    assert_eq!(c.event("output"), json!({"text": "8\n"}));
    c.event("terminated");
    c.call("trace.disable", Value::Null).unwrap();
    c.call("run", json!({"source": "debug.toy", "args": []})).unwrap();
    assert_eq!(c.event("output"), json!({"text": "8\n"}));
}

#[test]
fn errors() {
    let srv = debug_server();
    let mut c = Client::connect(srv.local_addr());
    let e = c.call("stack", Value::Null).unwrap_err();
    assert_eq!(e, json!({"code": 1001, "message": "not suspended"}));
    assert_eq!(c.call("resume", Value::Null).unwrap_err()["code"], 1001);
    assert_eq!(
        c.call("eval", json!({"frameIndex": 0, "text": "1"})).unwrap_err()["code"],
        1001
    );
    assert_eq!(c.call("frobnicate", Value::Null).unwrap_err()["code"], -32601);
    assert_eq!(
        c.call("bp.set", json!({"source": "debug.toy"})).unwrap_err()["code"],
        -32602
    );
    assert_eq!(
        c.call("bp.set", json!({"source": "debug.toy", "line": "two"}))
            .unwrap_err()["code"],
        -32602
    );
    assert_eq!(
        c.call("run", json!({"source": "debug.toy", "args": [1]})).unwrap_err()["code"],
        -32602
    );
    assert_eq!(
        c.call("run", json!({"source": "missing.toy", "args": []})).unwrap_err()["code"],
        -32602
    );
    c.send_raw("{not json");
    assert_eq!(c.read().unwrap()["error"]["code"], -32700);
    c.send_raw(r#"{"id":9}"#);
    assert_eq!(c.read().unwrap()["error"]["code"], -32600);
}

#[test]
fn requests_while_running() {
    let srv = server(vec![toy("spin.toy", "i = 0\nwhile true {\n  i = i + 1\n}\n")]);
    let mut c = Client::connect(srv.local_addr());
    c.call("run", json!({"source": "spin.toy", "args": []})).unwrap();
    assert_eq!(c.call("stack", Value::Null).unwrap_err()["code"], 1001);
    assert_eq!(
        c.call("run", json!({"source": "spin.toy", "args": []})).unwrap_err()["code"],
        1002
    );
    assert!(c.call("sources.list", Value::Null).is_ok());
    // breakpoints set while running take effect
    c.call(
        "bp.set",
        json!({"source": "spin.toy", "line": 3, "condition": "i == 1000000"}),
    )
    .unwrap();
    c.event("suspended");
    assert_eq!(
        c.call("eval", json!({"frameIndex": 0, "text": "i"})).unwrap()["value"],
        "1000000"
    );
    c.call("bp.remove", json!({"id": 1})).unwrap();
    c.call("resume", Value::Null).unwrap();
    c.call("pause", Value::Null).unwrap();
    assert_eq!(c.event("suspended")["reason"], "step");
    c.call("resume", Value::Null).unwrap();
    srv.shutdown();
    let t = c.event("terminated");
    assert!(t["error"].as_str().unwrap().contains("server shut down"), "{t}");
}

#[test]
fn second_client_is_refused() {
    let srv = debug_server();
    let mut first = Client::connect(srv.local_addr());
    assert!(first.call("sources.list", Value::Null).is_ok());
    let mut second = Client::connect(srv.local_addr());
    assert_eq!(second.read().unwrap_err(), Some(4000));
    first.close();
    // the slot frees up once the first client leaves
    std::thread::sleep(Duration::from_millis(200));
    let mut third = Client::connect(srv.local_addr());
    assert!(third.call("sources.list", Value::Null).is_ok());
}

#[test]
fn disconnect_clears_breakpoints_and_resumes() {
    let srv = debug_server();
    let mut c = Client::connect(srv.local_addr());
    c.call("bp.set", json!({"source": "debug.toy", "line": 2})).unwrap();
    c.call("run", json!({"source": "debug.toy", "args": []})).unwrap();
    c.event("suspended");
    c.close();
    std::thread::sleep(Duration::from_millis(200));
    let mut c = Client::connect(srv.local_addr());
    c.call("run", json!({"source": "debug.toy", "args": []})).unwrap();
    assert_eq!(c.event("output"), json!({"text": "8\n"}));
    assert_eq!(c.event("terminated"), json!({"exitCode": 0}));
}

#[test]
fn slow_client_overflows_without_blocking_the_engine() {
    let program = "i = 0\nwhile i < 300000 {\n  print(i)\n  i = i + 1\n}\n";
    let srv = server(vec![toy("loud.toy", program)]);
    let mut c = Client::connect(srv.local_addr());
    c.send("run", json!({"source": "loud.toy", "args": []}));
    // stop reading; the engine must finish regardless
    std::thread::sleep(Duration::from_secs(3));
    let code = loop {
        match c.read() {
            Ok(_) => {}
            Err(code) => break code,
        }
    };
    assert_eq!(code, Some(4001));
    std::thread::sleep(Duration::from_millis(200));
    let mut c = Client::connect(srv.local_addr());
    // idle again: a new run is accepted
    c.call("run", json!({"source": "loud.toy", "args": []})).unwrap();
}

fn http_get(addr: std::net::SocketAddr, path: &str) -> (String, Vec<u8>) {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: localhost\r\n\r\n").unwrap();
    let mut buf = Vec::new();
    s.read_to_end(&mut buf).unwrap();
    let split = buf.windows(4).position(|w| w == b"\r\n\r\n").unwrap();
    let head = String::from_utf8(buf[..split].to_vec()).unwrap();
    (head, buf[split + 4..].to_vec())
}

#[test]
fn serves_ui_files() {
    let dir = std::env::temp_dir().join(format!("probevm-ui-{}", std::process::id()));
    std::fs::create_dir_all(dir.join("assets")).unwrap();
    std::fs::write(dir.join("index.html"), "<p>ui</p>").unwrap();
    std::fs::write(dir.join("assets/app.js"), "let x = 1;").unwrap();
    let mut config = ServerConfig::local(vec![toy("debug.toy", DEBUG_TOY)]);
    config.ui_dir = Some(dir.clone());
    let srv = DebugServer::start(config).unwrap();
    let addr = srv.local_addr();
    let (head, body) = http_get(addr, "/ui/");
    assert!(head.starts_with("HTTP/1.1 200"), "{head}");
    assert!(head.contains("text/html"));
    assert_eq!(body, b"<p>ui</p>");
    let (head, body) = http_get(addr, "/ui/assets/app.js");
    assert!(head.contains("text/javascript"), "{head}");
    assert_eq!(body, b"let x = 1;");
    assert!(http_get(addr, "/ui/missing.css").0.starts_with("HTTP/1.1 404"));
    assert!(http_get(addr, "/ui/../Cargo.toml").0.starts_with("HTTP/1.1 404"));
    // the WebSocket endpoint still works alongside
    let mut c = Client::connect(addr);
    assert!(c.call("sources.list", Value::Null).is_ok());
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn placeholder_ui_without_directory() {
    let srv = debug_server();
    let (head, body) = http_get(srv.local_addr(), "/ui");
    assert!(head.starts_with("HTTP/1.1 200"), "{head}");
    assert!(String::from_utf8(body).unwrap().contains("probevm"));
}
