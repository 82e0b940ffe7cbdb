//! WebSocket debug server. One client at a time drives a [`DebugSession`]
//! with the JSON protocol described in `docs/protocol.md`; plain HTTP
//! requests under `/ui` are answered with static files.
//!
//! [`DebugSession`]: probevm_core::debugger::DebugSession

pub mod protocol;
mod session;

use std::borrow::Cow;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Sender};
use serde_json::json;
use tungstenite::protocol::frame::coding::CloseCode;
use tungstenite::protocol::CloseFrame;
use tungstenite::{Message, WebSocket};

use crate::host::{StdHost, ENGINE_STACK_BYTES};
use crate::run::new_engine;
use session::{engine_loop, Control};
pub use session::{EventSink, Lifetime};

const POLL: Duration = Duration::from_millis(10);

const PLACEHOLDER_INDEX: &str = "<!doctype html>
<html>
<head><meta charset=\"utf-8\"><title>probevm debugger</title></head>
<body>
<p>The debug UI is not bundled with this build. Set <code>PROBEVM_UI_DIR</code>
to a directory containing the built UI, or connect a protocol client to this
address over WebSocket.</p>
</body>
</html>
";

#[derive(Clone, Debug)]
pub struct ServerSource {
    pub name: String,
    pub language: String,
    pub text: String,
}

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub addr: SocketAddr,
    /// Directory served under `/ui`; `None` serves a placeholder page.
    pub ui_dir: Option<PathBuf>,
    /// Also copy guest output to stdout.
    pub echo_output: bool,
    pub lifetime: Lifetime,
    pub sources: Vec<ServerSource>,
}

impl ServerConfig {
    pub fn local(sources: Vec<ServerSource>) -> ServerConfig {
        ServerConfig {
            addr: SocketAddr::from(([127, 0, 0, 1], 0)),
            ui_dir: None,
            echo_output: false,
            lifetime: Lifetime::Forever,
            sources,
        }
    }
}

struct Shared {
    ctrl: Sender<Control>,
    pending: Arc<AtomicBool>,
    sink: EventSink,
    busy: AtomicBool,
    stop: AtomicBool,
    ui_dir: Option<PathBuf>,
}

pub struct DebugServer {
    addr: SocketAddr,
    shared: Arc<Shared>,
    engine: Option<JoinHandle<i32>>,
    acceptor: Option<JoinHandle<()>>,
}

impl DebugServer {
    /// Binds the listener and starts the engine and acceptor threads.
    pub fn start(config: ServerConfig) -> io::Result<DebugServer> {
        let listener = TcpListener::bind(config.addr)?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let (ctrl_tx, ctrl_rx) = unbounded();
        let shared = Arc::new(Shared {
            ctrl: ctrl_tx,
            pending: Arc::new(AtomicBool::new(false)),
            sink: EventSink::default(),
            busy: AtomicBool::new(false),
            stop: AtomicBool::new(false),
            ui_dir: config.ui_dir.clone(),
        });

        let (pending, sink) = (shared.pending.clone(), shared.sink.clone());
        let engine = std::thread::Builder::new()
            .name("probevm-engine".into())
            .stack_size(ENGINE_STACK_BYTES)
            .spawn(move || {
                let out_sink = sink.clone();
                let echo = config.echo_output;
                let host = StdHost::new(
                    Box::new(move |text| {
                        if echo {
                            let mut out = io::stdout().lock();
                            let _ = out.write_all(text.as_bytes());
                            let _ = out.flush();
                        }
                        out_sink.event("output", json!({"text": text}));
                    }),
                    Box::new(|line| eprintln!("{line}")),
                );
                let mut engine = new_engine(Box::new(host));
                for s in &config.sources {
                    match engine.create_source(&s.name, &s.language, &s.text, false) {
                        // syntax errors surface when the source is run
                        Ok(src) => drop(engine.load(&src)),
                        Err(e) => eprintln!("probevm: {e}"),
                    }
                }
                engine_loop(&mut engine, ctrl_rx, pending, sink, config.lifetime)
            })?;

        let acc = shared.clone();
        let acceptor = std::thread::Builder::new()
            .name("probevm-accept".into())
            .spawn(move || accept_loop(listener, acc))?;

        Ok(DebugServer {
            addr,
            shared,
            engine: Some(engine),
            acceptor: Some(acceptor),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops serving; a running program is cancelled.
    pub fn shutdown(&self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        let _ = self.shared.ctrl.send(Control::Shutdown);
        self.shared.pending.store(true, Ordering::Release);
    }

    /// Waits for the engine loop to finish; returns the last run's exit code.
    pub fn wait(mut self) -> i32 {
        let code = self.engine.take().map(|h| h.join().unwrap_or(1)).unwrap_or(1);
        self.shared.stop.store(true, Ordering::SeqCst);
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
        code
    }
}

impl Drop for DebugServer {
    fn drop(&mut self) {
        if self.engine.is_some() {
            self.shutdown();
            if let Some(h) = self.engine.take() {
                let _ = h.join();
            }
        }
        self.shared.stop.store(true, Ordering::SeqCst);
        if let Some(a) = self.acceptor.take() {
            let _ = a.join();
        }
    }
}

/// `probevm run --debug-port`: serves one program until the first client
/// that ran it disconnects.
pub fn serve_cli(port: u16, name: &str, language: &str, text: &str) -> i32 {
    let config = ServerConfig {
        addr: SocketAddr::from(([127, 0, 0, 1], port)),
        ui_dir: std::env::var_os("PROBEVM_UI_DIR").map(PathBuf::from),
        echo_output: true,
        lifetime: Lifetime::OneSession,
        sources: vec![ServerSource {
            name: name.into(),
            language: language.into(),
            text: text.into(),
        }],
    };
    let server = match DebugServer::start(config) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("probevm: cannot listen on port {port}: {e}");
            return 1;
        }
    };
    let addr = server.local_addr();
    eprintln!("probevm: debug server on ws://{addr}/ (UI at http://{addr}/ui/)");
    server.wait()
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    let mut clients = Vec::new();
    while !shared.stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let s = shared.clone();
                clients.push(std::thread::spawn(move || {
                    let _ = serve_connection(stream, &s);
                }));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => std::thread::sleep(POLL),
            Err(_) => std::thread::sleep(POLL),
        }
        clients.retain(|h: &JoinHandle<()>| !h.is_finished());
    }
    for h in clients {
        let _ = h.join();
    }
}

/// Request path of an HTTP request head, once the whole head is buffered.
fn peek_path(stream: &TcpStream) -> io::Result<String> {
    let deadline = Instant::now() + Duration::from_secs(5);
    let mut buf = [0u8; 8192];
    loop {
        let n = stream.peek(&mut buf)?;
        let head = &buf[..n];
        if head.windows(4).any(|w| w == b"\r\n\r\n") || n == buf.len() {
            let text = String::from_utf8_lossy(head);
            let line = text.lines().next().unwrap_or("");
            let mut parts = line.split(' ');
            let _method = parts.next();
            return Ok(parts.next().unwrap_or("/").to_string());
        }
        if n == 0 || Instant::now() > deadline {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "incomplete request head"));
        }
        std::thread::sleep(Duration::from_millis(2));
    }
}

fn serve_connection(stream: TcpStream, shared: &Shared) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    let path = peek_path(&stream)?;
    if path == "/ui" || path.starts_with("/ui/") || path.starts_with("/ui?") {
        return serve_static(stream, &path, shared.ui_dir.as_deref());
    }
    let mut ws = tungstenite::accept(stream).map_err(io::Error::other)?;
    if shared.busy.swap(true, Ordering::SeqCst) {
        let _ = ws.close(Some(CloseFrame {
            code: CloseCode::from(protocol::CLOSE_BUSY),
            reason: Cow::Borrowed("another client is attached"),
        }));
        finish_close(&mut ws);
        return Ok(());
    }
    let result = client_session(&mut ws, shared);
    shared.sink.detach();
    let _ = shared.ctrl.send(Control::Disconnected);
    shared.pending.store(true, Ordering::Release);
    shared.busy.store(false, Ordering::SeqCst);
    result
}

/// Reads until the peer acknowledges the close or goes away.
fn finish_close(ws: &mut WebSocket<TcpStream>) {
    let deadline = Instant::now() + Duration::from_secs(2);
    while Instant::now() < deadline {
        match ws.read() {
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(_) => break,
        }
    }
}

fn client_session(ws: &mut WebSocket<TcpStream>, shared: &Shared) -> io::Result<()> {
    ws.get_ref().set_read_timeout(Some(POLL))?;
    let (tx, rx) = bounded(protocol::EVENT_QUEUE_CAPACITY);
    let overflowed = Arc::new(AtomicBool::new(false));
    shared.sink.attach(tx, overflowed.clone());
    loop {
        while let Ok(text) = rx.try_recv() {
            ws.send(Message::Text(text)).map_err(io::Error::other)?;
        }
        if overflowed.load(Ordering::SeqCst) {
            let _ = ws.close(Some(CloseFrame {
                code: CloseCode::from(protocol::CLOSE_OVERFLOW),
                reason: Cow::Borrowed("event queue overflow"),
            }));
            finish_close(ws);
            return Ok(());
        }
        if shared.stop.load(Ordering::SeqCst) {
            let _ = ws.close(None);
            finish_close(ws);
            return Ok(());
        }
        match ws.read() {
            Ok(Message::Text(text)) => match protocol::parse_request(&text) {
                Ok(req) => {
                    let _ = shared.ctrl.send(Control::Request(req));
                    shared.pending.store(true, Ordering::Release);
                }
                Err(frame) => ws.send(Message::Text(frame)).map_err(io::Error::other)?,
            },
            Ok(Message::Close(_)) => {
                finish_close(ws);
                return Ok(());
            }
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(()),
            Err(e) => return Err(io::Error::other(e)),
        }
    }
}

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("html") => "text/html; charset=utf-8",
        Some("js" | "mjs") => "text/javascript; charset=utf-8",
        Some("css") => "text/css; charset=utf-8",
        Some("json" | "map") => "application/json",
        Some("svg") => "image/svg+xml",
        Some("png") => "image/png",
        Some("ico") => "image/x-icon",
        Some("wasm") => "application/wasm",
        _ => "application/octet-stream",
    }
}

/// Maps a `/ui` request path into `root`, rejecting escapes.
fn resolve_ui_path(root: &Path, request: &str) -> Option<PathBuf> {
    let path = request.split(['?', '#']).next().unwrap_or("");
    let rel = path.strip_prefix("/ui").unwrap_or("").trim_start_matches('/');
    let rel = if rel.is_empty() || rel.ends_with('/') {
        format!("{rel}index.html")
    } else {
        rel.to_string()
    };
    let rel = Path::new(&rel);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return None;
    }
    Some(root.join(rel))
}

fn serve_static(mut stream: TcpStream, request: &str, root: Option<&Path>) -> io::Result<()> {
    // drain the request head
    let mut head = Vec::new();
    let mut byte = [0u8; 1];
    while !head.ends_with(b"\r\n\r\n") && stream.read(&mut byte)? == 1 {
        head.push(byte[0]);
    }
    let found: Option<(Vec<u8>, &str)> = match root {
        Some(root) => {
            resolve_ui_path(root, request).and_then(|p| std::fs::read(&p).ok().map(|body| (body, content_type(&p))))
        }
        None => {
            let p = request.split('?').next().unwrap_or("");
            matches!(p, "/ui" | "/ui/" | "/ui/index.html")
                .then(|| (PLACEHOLDER_INDEX.as_bytes().to_vec(), "text/html; charset=utf-8"))
        }
    };
    let (status, body, ctype) = match found {
        Some((body, ctype)) => ("200 OK", body, ctype),
        None => ("404 Not Found", b"not found\n".to_vec(), "text/plain; charset=utf-8"),
    };
    write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: {ctype}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    )?;
    stream.write_all(&body)?;
    stream.flush()
}
