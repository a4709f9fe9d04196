//! Twin service: WebSocket `/twin`, HTTP `/snapshot`, and a plain TCP
//! endpoint carrying the same NDJSON frames.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde::Deserialize;
use symbiot_core::scenario::{Runner, TICK_MS};
use symbiot_core::twin::{parse_command, OperatorCommand, TwinHub, TwinMessage};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};

/// How long a fresh session waits for `hello` before sending a plain snapshot.
const HELLO_WAIT: Duration = Duration::from_millis(500);

#[derive(Clone)]
pub struct Shared(Arc<Mutex<TwinHub>>);

impl Shared {
    pub fn new(hub: TwinHub) -> Self {
        Self(Arc::new(Mutex::new(hub)))
    }

    pub fn lock(&self) -> MutexGuard<'_, TwinHub> {
        self.0.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Steps the runner at `TICK_MS / speed` wall time per tick.
pub async fn drive(shared: Shared, mut runner: Runner) -> Runner {
    {
        let mut hub = shared.lock();
        runner.start(&mut hub);
    }
    loop {
        let more = runner.step(&mut shared.lock());
        if !more {
            return runner;
        }
        let speed = runner.speed();
        if speed > 0.0 {
            tokio::time::sleep(Duration::from_secs_f64(TICK_MS as f64 / 1000.0 / speed)).await;
        } else {
            tokio::task::yield_now().await;
        }
    }
}

pub async fn bind_ws(shared: Shared, addr: SocketAddr) -> anyhow::Result<SocketAddr> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let app = Router::new()
        .route("/twin", get(twin_ws))
        .route("/snapshot", get(snapshot))
        .with_state(shared);
    tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            eprintln!("ws server stopped: {e}");
        }
    });
    Ok(local)
}

pub async fn bind_tcp(shared: Shared, addr: SocketAddr) -> anyhow::Result<SocketAddr> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    tokio::spawn(async move {
        while let Ok((stream, _)) = listener.accept().await {
            tokio::spawn(tcp_session(shared.clone(), stream));
        }
    });
    Ok(local)
}

#[derive(Deserialize)]
struct AuthQuery {
    token: Option<String>,
    since: Option<u64>,
}

fn token_of(q: &AuthQuery, headers: &HeaderMap) -> String {
    let bearer = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    q.token.as_deref().or(bearer).unwrap_or_default().to_string()
}

async fn snapshot(State(shared): State<Shared>, Query(q): Query<AuthQuery>, headers: HeaderMap) -> Response {
    let hub = shared.lock();
    if hub.authenticate(&token_of(&q, &headers)).is_err() {
        return StatusCode::UNAUTHORIZED.into_response();
    }
    let body: String = hub.resume(q.since.unwrap_or(0)).iter().map(|m| m.to_line() + "\n").collect();
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

async fn twin_ws(
    State(shared): State<Shared>,
    Query(q): Query<AuthQuery>,
    headers: HeaderMap,
    ws: WebSocketUpgrade,
) -> Response {
    let token = token_of(&q, &headers);
    if shared.lock().authenticate(&token).is_err() {
        return StatusCode::UNAUTHORIZED.into_response();
    }
    ws.on_upgrade(move |socket| session(shared, token, WsLink(socket)))
}

/// A line-oriented duplex link.
trait Link {
    async fn recv(&mut self) -> Option<String>;
    async fn send(&mut self, line: String) -> bool;
}

struct WsLink(WebSocket);

impl Link for WsLink {
    async fn recv(&mut self) -> Option<String> {
        loop {
            match self.0.recv().await? {
                Ok(Message::Text(t)) => return Some(t.to_string()),
                Ok(Message::Close(_)) | Err(_) => return None,
                Ok(_) => continue,
            }
        }
    }

    async fn send(&mut self, line: String) -> bool {
        self.0.send(Message::Text(line.into())).await.is_ok()
    }
}

struct TcpLink {
    lines: tokio::io::Lines<BufReader<tokio::net::tcp::OwnedReadHalf>>,
    out: tokio::net::tcp::OwnedWriteHalf,
}

impl Link for TcpLink {
    async fn recv(&mut self) -> Option<String> {
        self.lines.next_line().await.ok().flatten()
    }

    async fn send(&mut self, mut line: String) -> bool {
        line.push('\n');
        self.out.write_all(line.as_bytes()).await.is_ok()
    }
}

#[derive(Deserialize)]
struct TcpAuth {
    token: String,
}

/// TCP sessions open with one `{"token": ...}` line.
async fn tcp_session(shared: Shared, stream: TcpStream) {
    let (read, out) = stream.into_split();
    let mut link = TcpLink {
        lines: BufReader::new(read).lines(),
        out,
    };
    let Some(first) = link.recv().await else { return };
    let Ok(auth) = serde_json::from_str::<TcpAuth>(&first) else { return };
    if shared.lock().authenticate(&auth.token).is_err() {
        return;
    }
    session(shared, auth.token, link).await;
}

async fn session(shared: Shared, token: String, mut link: impl Link) {
    let Ok(mut s) = shared.lock().connect(&token) else { return };
    // stream messages at or below this seq were already covered by a snapshot
    let mut floor = 0;
    let mut pending = None;
    let last_seq = match tokio::time::timeout(HELLO_WAIT, link.recv()).await {
        Ok(None) => {
            shared.lock().disconnect(s.id);
            return;
        }
        Ok(Some(line)) => match parse_command(&line) {
            Ok(OperatorCommand::Hello { last_seq }) => last_seq,
            _ => {
                pending = Some(line);
                0
            }
        },
        Err(_) => 0,
    };
    let mut alive = resync(&shared, &mut link, last_seq, &mut floor).await;
    if let Some(line) = pending {
        handle_line(&shared, s.id, &line);
    }
    while alive {
        tokio::select! {
            msg = s.rx.recv() => match msg {
                Some(m) if m.seq <= floor => {}
                Some(m) => alive = link.send(m.to_line()).await,
                // dropped by the hub for falling behind
                None => break,
            },
            line = link.recv() => match line {
                None => alive = false,
                Some(line) => match parse_command(&line) {
                    Ok(OperatorCommand::Hello { last_seq }) => {
                        alive = resync(&shared, &mut link, last_seq, &mut floor).await;
                    }
                    _ => handle_line(&shared, s.id, &line),
                },
            },
        }
    }
    shared.lock().disconnect(s.id);
}

async fn resync(shared: &Shared, link: &mut impl Link, last_seq: u64, floor: &mut u64) -> bool {
    let msgs: Vec<TwinMessage> = shared.lock().resume(last_seq);
    *floor = msgs.last().map_or(*floor, |m| m.seq);
    for m in msgs {
        if !link.send(m.to_line()).await {
            return false;
        }
    }
    true
}

fn handle_line(shared: &Shared, session: u64, line: &str) {
    let mut hub = shared.lock();
    match parse_command(line) {
        Ok(cmd) => {
            let _ = hub.apply_command(session, cmd);
        }
        Err(_) => {
            hub.reject_malformed();
        }
    }
}
