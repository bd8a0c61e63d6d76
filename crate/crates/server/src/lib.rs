//! WebSocket front end for flatpack environments.
//!
//! Clients connect to `/ws` and exchange one JSON message per text frame
//! (see [`protocol`]). With a UI directory configured, every other GET is
//! served from it as static files.

pub mod protocol;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use tokio::net::{TcpListener, ToSocketAddrs};
use tokio::sync::watch;
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;

pub use protocol::{ConnId, ProtoError, SessionTable, TableOptions, PROTOCOL_VERSION};

pub const DEFAULT_PORT: u16 = 8765;
pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(600);
pub const DEFAULT_PING_INTERVAL: Duration = Duration::from_secs(20);
/// WebSocket close code for "going away".
const CLOSE_GOING_AWAY: u16 = 1001;

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub ui_dir: Option<PathBuf>,
    pub idle_timeout: Duration,
    pub ping_interval: Duration,
    pub record_dir: Option<PathBuf>,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self {
            ui_dir: None,
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
            ping_interval: DEFAULT_PING_INTERVAL,
            record_dir: None,
        }
    }
}

#[derive(Clone)]
struct AppState {
    table: Arc<SessionTable>,
    next_conn: Arc<AtomicU64>,
    shutdown: watch::Receiver<bool>,
    ping_interval: Duration,
}

/// A running server. Dropping the handle does not stop it; call
/// [`ServerHandle::shutdown`].
pub struct ServerHandle {
    local_addr: SocketAddr,
    table: Arc<SessionTable>,
    stop: watch::Sender<bool>,
    task: JoinHandle<std::io::Result<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    pub fn sessions(&self) -> &Arc<SessionTable> {
        &self.table
    }

    /// Closes every connection with a close frame, finishes all sessions and
    /// waits for the listener to stop.
    pub async fn shutdown(self) -> std::io::Result<()> {
        let _ = self.stop.send(true);
        let res = self.task.await.unwrap_or_else(|e| Err(std::io::Error::other(e)));
        self.table.close_all();
        res
    }

    /// Waits until the server stops on its own (it only stops on shutdown).
    pub async fn wait(self) -> std::io::Result<()> {
        self.task.await.unwrap_or_else(|e| Err(std::io::Error::other(e)))
    }

    /// A sender that triggers shutdown when `true` is sent.
    pub fn stopper(&self) -> watch::Sender<bool> {
        self.stop.clone()
    }
}

fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let r = Router::new().route("/ws", get(ws_handler));
    let r = match ui_dir {
        Some(dir) => r.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => r.route("/", get(banner)),
    };
    r.with_state(state)
}

/// Binds `addr` and starts serving in the background.
pub async fn start(addr: impl ToSocketAddrs, opts: ServerOptions) -> std::io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr).await?;
    start_on(listener, opts)
}

pub fn start_on(listener: TcpListener, opts: ServerOptions) -> std::io::Result<ServerHandle> {
    let local_addr = listener.local_addr()?;
    let table = Arc::new(SessionTable::new(TableOptions { record_dir: opts.record_dir.clone() }));
    let (stop, shutdown) = watch::channel(false);
    let state = AppState {
        table: table.clone(),
        next_conn: Arc::new(AtomicU64::new(1)),
        shutdown: shutdown.clone(),
        ping_interval: opts.ping_interval,
    };
    spawn_evictor(table.clone(), opts.idle_timeout, shutdown.clone());
    let app = router(state, opts.ui_dir.clone());
    let mut signal = shutdown;
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                stopped(&mut signal).await;
            })
            .await
    });
    tracing::info!(%local_addr, "listening");
    Ok(ServerHandle { local_addr, table, stop, task })
}

fn spawn_evictor(table: Arc<SessionTable>, idle: Duration, mut shutdown: watch::Receiver<bool>) {
    let period = (idle / 4).clamp(Duration::from_millis(10), Duration::from_secs(30));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tokio::select! {
                _ = tick.tick() => {
                    let n = table.evict_idle(idle);
                    if n > 0 {
                        tracing::info!(evicted = n, "idle sessions closed");
                    }
                }
                _ = stopped(&mut shutdown) => break,
            }
        }
    });
}

/// Resolves once shutdown has been signalled (or the sender is gone).
async fn stopped(rx: &mut watch::Receiver<bool>) {
    let _ = rx.wait_for(|s| *s).await;
}

async fn banner() -> &'static str {
    "flatpack environment server: connect a WebSocket client to /ws\n"
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, state)).into_response()
}

async fn connection(mut socket: WebSocket, state: AppState) {
    let conn: ConnId = state.next_conn.fetch_add(1, Ordering::Relaxed);
    let mut shutdown = state.shutdown.clone();
    let mut ping = tokio::time::interval(state.ping_interval);
    ping.tick().await;
    tracing::info!(conn, "connection opened");
    loop {
        tokio::select! {
            msg = socket.recv() => {
                let Some(Ok(msg)) = msg else { break };
                let reply = match msg {
                    Message::Text(t) => state.table.handle_text(conn, t.as_str()),
                    Message::Binary(b) => match std::str::from_utf8(&b) {
                        Ok(t) => state.table.handle_text(conn, t),
                        Err(_) => state.table.handle_text(conn, "\u{0}"),
                    },
                    Message::Close(_) => break,
                    Message::Ping(_) | Message::Pong(_) => continue,
                };
                if socket.send(Message::Text(reply.into())).await.is_err() {
                    break;
                }
            }
            _ = ping.tick() => {
                if socket.send(Message::Ping(Vec::new().into())).await.is_err() {
                    break;
                }
            }
            _ = stopped(&mut shutdown) => {
                let frame = CloseFrame { code: CLOSE_GOING_AWAY, reason: "server shutting down".into() };
                let _ = socket.send(Message::Close(Some(frame))).await;
                break;
            }
        }
    }
    let closed = state.table.close_connection(conn);
    tracing::info!(conn, sessions_closed = closed, "connection closed");
}
