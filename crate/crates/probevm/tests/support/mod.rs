#![allow(dead_code)]

use std::net::{SocketAddr, TcpStream};
use std::time::{Duration, Instant};

use probevm::server::{DebugServer, ServerConfig, ServerSource};
use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

pub const DEBUG_TOY: &str = include_str!("../../fixtures/debug.toy");

pub fn toy(name: &str, text: &str) -> ServerSource {
    ServerSource {
        name: name.into(),
        language: "toylang".into(),
        text: text.into(),
    }
}

pub fn server(sources: Vec<ServerSource>) -> DebugServer {
    DebugServer::start(ServerConfig::local(sources)).expect("bind")
}

/// Protocol client that records every frame in order.
pub struct Client {
    ws: WebSocket<MaybeTlsStream<TcpStream>>,
    next_id: i64,
    pub transcript: Vec<String>,
    /// Frames received but not yet consumed by an `expect`.
    backlog: Vec<Value>,
}

impl Client {
    pub fn connect(addr: SocketAddr) -> Client {
        let (ws, _) = tungstenite::connect(format!("ws://{addr}/")).expect("connect");
        if let MaybeTlsStream::Plain(s) = ws.get_ref() {
            s.set_read_timeout(Some(Duration::from_secs(20))).unwrap();
        }
        Client {
            ws,
            next_id: 1,
            transcript: Vec::new(),
            backlog: Vec::new(),
        }
    }

    pub fn send_raw(&mut self, text: &str) {
        self.transcript.push(format!("> {text}"));
        self.ws.send(Message::Text(text.into())).expect("send");
    }

    pub fn send(&mut self, method: &str, params: Value) -> i64 {
        let id = self.next_id;
        self.next_id += 1;
        let frame = if params.is_null() {
            json!({"id": id, "method": method})
        } else {
            json!({"id": id, "method": method, "params": params})
        };
        self.send_raw(&frame.to_string());
        id
    }

    /// Next frame, or the close code if the server closed.
    pub fn read(&mut self) -> Result<Value, Option<u16>> {
        loop {
            match self.ws.read() {
                Ok(Message::Text(t)) => {
                    self.transcript.push(format!("< {t}"));
                    return Ok(serde_json::from_str(&t).expect("server sends JSON"));
                }
                Ok(Message::Close(frame)) => return Err(frame.map(|f| u16::from(f.code))),
                Ok(_) => {}
                Err(_) => return Err(None),
            }
        }
    }

    fn take(&mut self, pred: impl Fn(&Value) -> bool) -> Value {
        if let Some(i) = self.backlog.iter().position(&pred) {
            return self.backlog.remove(i);
        }
        let deadline = Instant::now() + Duration::from_secs(20);
        loop {
            assert!(
                Instant::now() < deadline,
                "timed out; transcript: {:#?}",
                self.transcript
            );
            let v = self
                .read()
                .unwrap_or_else(|c| panic!("closed ({c:?}); transcript: {:#?}", self.transcript));
            if pred(&v) {
                return v;
            }
            self.backlog.push(v);
        }
    }

    /// The response to request `id`: `Ok(result)` or `Err(error)`.
    pub fn response(&mut self, id: i64) -> Result<Value, Value> {
        let v = self.take(|v| v.get("id").and_then(Value::as_i64) == Some(id) && v.get("method").is_none());
        match v.get("error") {
            Some(e) => Err(e.clone()),
            None => Ok(v["result"].clone()),
        }
    }

    pub fn call(&mut self, method: &str, params: Value) -> Result<Value, Value> {
        let id = self.send(method, params);
        self.response(id)
    }

    pub fn event(&mut self, method: &str) -> Value {
        let v = self.take(|v| v.get("method").and_then(Value::as_str) == Some(method));
        v.get("params").cloned().unwrap_or(Value::Null)
    }

    pub fn close(mut self) {
        let _ = self.ws.close(None);
        while self.ws.read().is_ok() {}
    }
}

/// Replaces the request id of every top-level frame with its ordinal, so
/// that transcripts compare independently of the ids a client picks.
pub fn normalize(transcript: &[String]) -> String {
    let mut ids = std::collections::HashMap::new();
    let mut out = String::new();
    for line in transcript {
        let (dir, body) = line.split_at(2);
        let mut v: Value = serde_json::from_str(body).unwrap();
        if let Some(id) = v.get("id").and_then(Value::as_i64) {
            let n = ids.len() as i64 + 1;
            let n = *ids.entry(id).or_insert(n);
            v["id"] = json!(n);
        }
        out.push_str(dir);
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}
