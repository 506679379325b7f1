use std::future::Future;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use thiserror::Error;
use tokio::net::TcpListener;
use tower_http::services::ServeDir;

use magsim_core::models::{ModelError, ModelLibrary};

use crate::worker::{spawn_session, Inbound};

pub const DEFAULT_PORT: u16 = 8642;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("port {port} is already in use")]
    PortInUse { port: u16 },
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error(transparent)]
    Models(#[from] ModelError),
    #[error("server error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub host: IpAddr,
    pub port: u16,
    /// Extra descriptors loaded on top of the built-in models.
    pub models_dir: Option<PathBuf>,
    /// UI bundle served at `/`.
    pub static_dir: Option<PathBuf>,
    pub upload_dir: PathBuf,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            models_dir: None,
            static_dir: None,
            upload_dir: std::env::temp_dir().join(format!("magsim-uploads-{}", std::process::id())),
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    library: Arc<RwLock<ModelLibrary>>,
    upload_dir: PathBuf,
    next_session: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(library: ModelLibrary, upload_dir: PathBuf) -> Self {
        Self {
            library: Arc::new(RwLock::new(library)),
            upload_dir,
            next_session: Arc::new(AtomicU64::new(1)),
        }
    }

    /// Built-in models plus the descriptors in `config.models_dir`.
    pub fn from_config(config: &ServiceConfig) -> Result<Self, ServeError> {
        let mut library = ModelLibrary::builtin();
        if let Some(dir) = &config.models_dir {
            library.load_dir(dir)?;
        }
        Ok(Self::new(library, config.upload_dir.clone()))
    }

    pub fn library(&self) -> Arc<RwLock<ModelLibrary>> {
        self.library.clone()
    }
}

const PLACEHOLDER_INDEX: &str = "<!doctype html><title>magsim</title>\
<p>magsim service is running. Connect a client to the <code>/sim</code> web socket.</p>";

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let router = Router::new().route("/sim", get(ws_handler));
    let router = match static_dir {
        Some(dir) if dir.is_dir() => router.fallback_service(ServeDir::new(dir)),
        _ => router.route("/", get(|| async { Html(PLACEHOLDER_INDEX) })),
    };
    router.with_state(state)
}

/// Binds the listening socket, mapping `AddrInUse` to [`ServeError::PortInUse`].
pub async fn bind(host: IpAddr, port: u16) -> Result<TcpListener, ServeError> {
    let addr = SocketAddr::new(host, port);
    TcpListener::bind(addr).await.map_err(|source| {
        if source.kind() == std::io::ErrorKind::AddrInUse {
            ServeError::PortInUse { port }
        } else {
            ServeError::Bind { addr, source }
        }
    })
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    state: AppState,
    static_dir: Option<PathBuf>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let app = router(state, static_dir);
    axum::serve(listener, app).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.max_message_size(256 << 20)
        .on_upgrade(move |socket| handle_socket(socket, state))
}

async fn handle_socket(socket: WebSocket, state: AppState) {
    let id = format!("s{}", state.next_session.fetch_add(1, Ordering::Relaxed));
    log::info!("session {id} connected");
    let handle = spawn_session(id.clone(), state.library.clone(), state.upload_dir.clone());
    let mailbox = handle.mailbox;
    let mut outgoing = handle.outgoing;
    let mut frames = handle.frames;
    let (mut sink, mut stream) = socket.split();

    let writer = tokio::spawn(async move {
        let mut frames_open = true;
        loop {
            tokio::select! {
                biased;
                text = outgoing.recv() => match text {
                    Some(t) => {
                        if sink.send(Message::Text(t.into())).await.is_err() {
                            break;
                        }
                    }
                    None => break,
                },
                changed = frames.changed(), if frames_open => {
                    if changed.is_err() {
                        frames_open = false;
                        continue;
                    }
                    let latest = frames.borrow_and_update().clone();
                    if let Some(bytes) = latest {
                        if sink.send(Message::Binary(bytes.as_ref().clone().into())).await.is_err() {
                            break;
                        }
                    }
                }
            }
        }
        let _ = sink.close().await;
    });

    while let Some(msg) = stream.next().await {
        let inbound = match msg {
            Ok(Message::Text(t)) => Inbound::Text(t.to_string()),
            Ok(Message::Binary(b)) => Inbound::Binary(b.len()),
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => continue,
        };
        if mailbox.send(inbound).is_err() {
            break;
        }
    }
    drop(mailbox);
    let _ = tokio::task::spawn_blocking(move || handle.thread.join()).await;
    let _ = writer.await;
    log::info!("session {id} closed");
}
