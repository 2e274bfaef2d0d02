//! Websocket tele-operation service.
//!
//! One task owns the [`GaitRuntime`]. It ticks on a fixed interval, applies
//! every queued command at the tick boundary, serializes the frame once and
//! broadcasts it. Connection tasks only parse, check sequence numbers and
//! enqueue; they never touch runtime state.

use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::ws::{Message, Utf8Bytes, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use gait_core::{Command, GaitRuntime, RuntimeConfig};
use serde::Deserialize;
use tokio::sync::{broadcast, mpsc, watch};
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;

use crate::protocol::{frame_json, parse_command, Hello, Reply, SequenceTracker};
use crate::session::{CommandEntry, Header, SessionWriter};

/// Frames buffered per subscriber before it counts as lagging (20 s at 50 Hz).
const BROADCAST_CAPACITY: usize = 1000;
const QUEUE_CAPACITY: usize = 256;
const RECORD_FLUSH_EVERY: u64 = 50;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("runtime: {0}")]
    Runtime(#[from] gait_core::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("task failed: {0}")]
    Join(#[from] tokio::task::JoinError),
}

#[derive(Clone, Debug)]
pub struct ServiceOptions {
    pub config: RuntimeConfig,
    pub bind: SocketAddr,
    /// Default telemetry decimation; clients may override with `?decimate=N`.
    pub decimate: u32,
    pub record: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ServiceSummary {
    pub frames: u64,
    pub commands_applied: u64,
    pub commands_rejected: u64,
}

struct Queued {
    client: String,
    seq: u64,
    command: Command,
    reply: mpsc::UnboundedSender<Utf8Bytes>,
}

#[derive(Clone)]
struct AppState {
    queue: mpsc::Sender<Queued>,
    frames: broadcast::Sender<(u64, Utf8Bytes)>,
    shutdown: watch::Receiver<bool>,
    hello: Arc<RuntimeConfig>,
    decimate: u32,
    sequences: Arc<Mutex<SequenceTracker>>,
    next_connection: Arc<AtomicU64>,
}

pub struct RunningService {
    addr: SocketAddr,
    shutdown: watch::Sender<bool>,
    runtime: JoinHandle<Result<ServiceSummary, ServiceError>>,
    server: JoinHandle<std::io::Result<()>>,
}

impl RunningService {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops ticking, applies whatever is still queued, flushes the record
    /// and closes all connections.
    pub async fn shutdown(self) -> Result<ServiceSummary, ServiceError> {
        let _ = self.shutdown.send(true);
        let summary = self.runtime.await??;
        self.server.await??;
        Ok(summary)
    }

    /// Resolves when the runtime task ends on its own (an error).
    pub async fn wait_runtime(&mut self) -> Result<ServiceSummary, ServiceError> {
        (&mut self.runtime).await?
    }
}

pub async fn start(options: ServiceOptions) -> Result<RunningService, ServiceError> {
    let runtime = GaitRuntime::new(options.config.clone())?;
    let record = match &options.record {
        Some(path) => {
            let file = std::fs::File::create(path)?;
            let start_ms = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0);
            Some(SessionWriter::new(
                BufWriter::new(file),
                &Header::new(&options.config, Some(start_ms)),
            )?)
        }
        None => None,
    };

    let listener = tokio::net::TcpListener::bind(options.bind)
        .await
        .map_err(|source| ServiceError::Bind {
            addr: options.bind,
            source,
        })?;
    let addr = listener.local_addr()?;

    let (queue_tx, queue_rx) = mpsc::channel(QUEUE_CAPACITY);
    let (frames_tx, _) = broadcast::channel(BROADCAST_CAPACITY);
    let (shutdown_tx, shutdown_rx) = watch::channel(false);

    let state = AppState {
        queue: queue_tx,
        frames: frames_tx.clone(),
        shutdown: shutdown_rx.clone(),
        hello: Arc::new(options.config.clone()),
        decimate: options.decimate.max(1),
        sequences: Arc::new(Mutex::new(SequenceTracker::default())),
        next_connection: Arc::new(AtomicU64::new(1)),
    };

    let mut app = Router::new().route("/ws", get(ws_handler));
    if let Some(dir) = &options.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    } else {
        app = app.route("/", get(|| async { "gaitd: connect a websocket client to /ws\n" }));
    }
    let app = app.with_state(state);

    let mut server_shutdown = shutdown_rx.clone();
    let server = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = server_shutdown.wait_for(|stop| *stop).await;
            })
            .await
    });
    let runtime = tokio::spawn(run_loop(runtime, queue_rx, frames_tx, record, shutdown_rx));

    tracing::info!(%addr, "serving");
    Ok(RunningService {
        addr,
        shutdown: shutdown_tx,
        runtime,
        server,
    })
}

type Record = SessionWriter<BufWriter<std::fs::File>>;

struct Loop {
    rt: GaitRuntime,
    record: Option<Record>,
    summary: ServiceSummary,
}

impl Loop {
    fn apply(&mut self, queued: Queued) -> std::io::Result<()> {
        let reply = match self.rt.apply(&queued.command) {
            Ok(ack) => {
                self.summary.commands_applied += 1;
                if let Some(rec) = &mut self.record {
                    rec.command(&CommandEntry {
                        tick: self.rt.tick_index(),
                        seq: Some(queued.seq),
                        client: Some(queued.client),
                        command: queued.command,
                    })?;
                }
                Reply::accepted(queued.seq, ack)
            }
            Err(e) => {
                self.summary.commands_rejected += 1;
                Reply::rejected(e.to_string(), Some(queued.seq))
            }
        };
        let _ = queued.reply.send(reply.to_json().into());
        Ok(())
    }
}

async fn run_loop(
    rt: GaitRuntime,
    mut queue: mpsc::Receiver<Queued>,
    frames: broadcast::Sender<(u64, Utf8Bytes)>,
    record: Option<Record>,
    mut shutdown: watch::Receiver<bool>,
) -> Result<ServiceSummary, ServiceError> {
    let period = Duration::from_secs_f64(rt.config().tick_dt());
    let mut interval = tokio::time::interval(period);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    let mut state = Loop {
        rt,
        record,
        summary: ServiceSummary::default(),
    };

    loop {
        tokio::select! {
            biased;
            _ = stopped(&mut shutdown) => break,
            _ = interval.tick() => {
                while let Ok(queued) = queue.try_recv() {
                    state.apply(queued)?;
                }
                let frame = state.rt.tick()?;
                let line = frame_json(&frame);
                if let Some(rec) = &mut state.record {
                    rec.frame_line(&line)?;
                    if frame.tick % RECORD_FLUSH_EVERY == 0 {
                        rec.flush()?;
                    }
                }
                state.summary.frames = frame.tick;
                // No subscribers is fine.
                let _ = frames.send((frame.tick, line.into()));
            }
        }
    }

    queue.close();
    while let Some(queued) = queue.recv().await {
        state.apply(queued)?;
    }
    if let Some(rec) = &mut state.record {
        rec.flush()?;
    }
    tracing::info!(frames = state.summary.frames, "runtime stopped");
    Ok(state.summary)
}

#[derive(Debug, Deserialize)]
struct WsParams {
    decimate: Option<u32>,
}

async fn ws_handler(
    ws: WebSocketUpgrade,
    Query(params): Query<WsParams>,
    State(state): State<AppState>,
) -> impl IntoResponse {
    let decimate = params.decimate.unwrap_or(state.decimate).max(1);
    ws.on_upgrade(move |socket| connection(socket, state, decimate))
}

async fn connection(socket: WebSocket, state: AppState, decimate: u32) {
    let id = state.next_connection.fetch_add(1, Ordering::Relaxed);
    let connection_client = format!("connection-{id}");
    let (mut sink, mut stream) = socket.split();
    let mut frames = state.frames.subscribe();
    let mut shutdown = state.shutdown.clone();
    let (reply_tx, mut reply_rx) = mpsc::unbounded_channel::<Utf8Bytes>();

    let hello = serde_json::to_string(&Hello::new(&state.hello, decimate)).expect("hello serializes");
    if sink.send(Message::Text(hello.into())).await.is_err() {
        return;
    }
    tracing::debug!(id, decimate, "client connected");

    loop {
        tokio::select! {
            _ = stopped(&mut shutdown) => {
                // Deliver replies for commands drained at shutdown.
                tokio::time::sleep(Duration::from_millis(50)).await;
                while let Ok(reply) = reply_rx.try_recv() {
                    let _ = sink.send(Message::Text(reply)).await;
                }
                let _ = sink.send(Message::Close(None)).await;
                break;
            }
            frame = frames.recv() => match frame {
                Ok((tick, text)) => {
                    if tick % u64::from(decimate) == 0 && sink.send(Message::Text(text)).await.is_err() {
                        break;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(missed)) => {
                    // A gap would break tick continuity; drop the client instead.
                    tracing::warn!(id, missed, "client lagged, closing");
                    let _ = sink.send(Message::Close(None)).await;
                    break;
                }
                Err(broadcast::error::RecvError::Closed) => break,
            },
            Some(reply) = reply_rx.recv() => {
                if sink.send(Message::Text(reply)).await.is_err() {
                    break;
                }
            }
            incoming = stream.next() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    handle_text(&state, &connection_client, text.as_str(), &reply_tx).await;
                }
                Some(Ok(Message::Binary(_))) => {
                    let _ = reply_tx.send(Reply::rejected("binary messages are not supported", None).to_json().into());
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
    tracing::debug!(id, "client disconnected");
}

async fn handle_text(
    state: &AppState,
    connection_client: &str,
    text: &str,
    reply: &mpsc::UnboundedSender<Utf8Bytes>,
) {
    let reject = |reason: String, seq: Option<u64>| {
        let _ = reply.send(Reply::rejected(reason, seq).to_json().into());
    };
    let msg = match parse_command(text) {
        Ok(msg) => msg,
        Err((reason, seq)) => return reject(reason, seq),
    };
    let client = msg.client.clone().unwrap_or_else(|| connection_client.to_string());
    let checked = state.sequences.lock().expect("sequence lock").check(&client, msg.seq);
    if let Err(reason) = checked {
        return reject(reason, Some(msg.seq));
    }
    let queued = Queued {
        client,
        seq: msg.seq,
        command: msg.command,
        reply: reply.clone(),
    };
    if state.queue.send(queued).await.is_err() {
        reject("service is shutting down".into(), Some(msg.seq));
    }
}

/// Resolves on Ctrl-C.
pub async fn ctrl_c() {
    if let Err(e) = tokio::signal::ctrl_c().await {
        tracing::error!("cannot listen for Ctrl-C: {e}");
        std::future::pending::<()>().await;
    }
}

async fn stopped(shutdown: &mut watch::Receiver<bool>) {
    let _ = shutdown.wait_for(|stop| *stop).await;
}
