use std::collections::{HashMap, HashSet};
use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, oneshot};
use tracing::{debug, info, warn};
use uuid::Uuid;
use viderex_core::nav::NavSession;
use viderex_core::route::{is_valid_name, RouteMemory};
use viderex_core::store::{decode_gray, LocalStore, RouteManifest};
use viderex_core::Error as CoreError;

use crate::api::{CreateSession, ErrorBody, SessionHandle, Uploaded, FRAME_PART, MANIFEST_PART};
use crate::sessions::{Registry, Session};

pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(600);
pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 1 << 30;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub store_root: PathBuf,
    pub idle_timeout: Duration,
    pub max_upload_bytes: usize,
}

impl ServiceConfig {
    pub fn new(store_root: impl Into<PathBuf>) -> Self {
        Self {
            store_root: store_root.into(),
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
        }
    }
}

#[derive(Debug)]
pub(crate) struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message.to_string())
    }

    fn not_found(what: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("not found: {what}"))
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let status = match &e {
            CoreError::NotARoute(_) | CoreError::MissingFrame(_) => StatusCode::NOT_FOUND,
            CoreError::NameCollision(_) => StatusCode::CONFLICT,
            CoreError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            warn!(status = %self.status, error = %self.message, "request failed");
        }
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, CoreError> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

struct Inner {
    store: LocalStore,
    sessions: Registry,
    /// Route name to (manifest checksum, memory).
    memories: Mutex<HashMap<String, (String, Arc<RouteMemory>)>>,
    writing: Mutex<HashSet<String>>,
}

/// Shared server state.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

/// Releases a route name reserved for writing.
struct WriteGuard {
    state: AppState,
    name: String,
}

impl Drop for WriteGuard {
    fn drop(&mut self) {
        self.state.0.writing.lock().unwrap().remove(&self.name);
    }
}

impl AppState {
    /// Opens the store and clears leftovers of interrupted writes.
    pub fn open(config: &ServiceConfig) -> Result<Self, CoreError> {
        let store = LocalStore::new(&config.store_root)?;
        let purged = store.purge_incomplete()?;
        if purged > 0 {
            info!(purged, "removed incomplete writes");
        }
        Ok(Self(Arc::new(Inner {
            store,
            sessions: Registry::new(config.idle_timeout),
            memories: Mutex::new(HashMap::new()),
            writing: Mutex::new(HashSet::new()),
        })))
    }

    pub fn store(&self) -> &LocalStore {
        &self.0.store
    }

    pub fn session_count(&self) -> usize {
        self.0.sessions.len()
    }

    fn begin_write(&self, name: &str) -> ApiResult<WriteGuard> {
        if !self.0.writing.lock().unwrap().insert(name.to_string()) {
            return Err(ApiError::new(StatusCode::CONFLICT, format!("route {name} is being written")));
        }
        Ok(WriteGuard {
            state: self.clone(),
            name: name.to_string(),
        })
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Session>> {
        Uuid::parse_str(id)
            .ok()
            .and_then(|id| self.0.sessions.get(id))
            .ok_or_else(|| ApiError::not_found(format!("session {id}")))
    }

    /// Route memory for `name`, rebuilt whenever the stored manifest changes.
    async fn memory(&self, name: &str) -> ApiResult<Arc<RouteMemory>> {
        let state = self.clone();
        let name = name.to_string();
        blocking(move || {
            let manifest = state.0.store.manifest(&name)?;
            if let Some((sum, memory)) = state.0.memories.lock().unwrap().get(&name) {
                if *sum == manifest.checksum {
                    return Ok(memory.clone());
                }
            }
            let memory = Arc::new(RouteMemory::from_route(state.0.store.load(&name)?)?);
            debug!(route = %name, snapshots = memory.len(), "built route memory");
            state
                .0
                .memories
                .lock()
                .unwrap()
                .insert(name, (manifest.checksum, memory.clone()));
            Ok(memory)
        })
        .await
    }
}

pub fn router(state: AppState, max_upload_bytes: usize) -> Router {
    Router::new()
        .route("/routes", get(list_routes))
        .route("/routes/{name}", get(get_route).put(put_route).delete(delete_route))
        .route("/routes/{name}/frames/{index}", get(get_frame))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(delete_session))
        .route("/sessions/{id}/frames", post(submit_frame))
        .route("/sessions/{id}/updates", get(stream_updates))
        .layer(DefaultBodyLimit::max(max_upload_bytes))
        .with_state(state)
}

async fn list_routes(State(state): State<AppState>) -> ApiResult<Response> {
    let store = state.store().clone();
    Ok(Json(blocking(move || store.list()).await?).into_response())
}

async fn get_route(State(state): State<AppState>, Path(name): Path<String>) -> ApiResult<Json<RouteManifest>> {
    let store = state.store().clone();
    Ok(Json(blocking(move || store.manifest(&name)).await?))
}

async fn get_frame(State(state): State<AppState>, Path((name, index)): Path<(String, usize)>) -> ApiResult<Response> {
    let store = state.store().clone();
    let bytes = blocking(move || store.frame_bytes(&name, index)).await?;
    Ok(([(header::CONTENT_TYPE, "image/x-portable-graymap")], bytes).into_response())
}

/// Reads every part of an upload. Rejections are decided only after the body
/// is consumed, so the client sees the status instead of a reset connection.
async fn read_upload(mut multipart: Multipart) -> ApiResult<(Option<RouteManifest>, Vec<Vec<u8>>)> {
    let mut manifest: Option<RouteManifest> = None;
    let mut frames = Vec::new();
    while let Some(field) = multipart.next_field().await.map_err(ApiError::bad_request)? {
        let part = field.name().map(str::to_string);
        let bytes = field.bytes().await.map_err(ApiError::bad_request)?;
        match part.as_deref() {
            Some(MANIFEST_PART) if manifest.is_none() => {
                manifest = Some(serde_json::from_slice(&bytes).map_err(ApiError::bad_request)?);
            }
            Some(FRAME_PART) => frames.push(bytes.to_vec()),
            other => return Err(ApiError::bad_request(format!("unexpected part {other:?}"))),
        }
    }
    Ok((manifest, frames))
}

async fn put_route(
    State(state): State<AppState>,
    Path(name): Path<String>,
    multipart: Multipart,
) -> ApiResult<Response> {
    let upload = read_upload(multipart).await;
    if !is_valid_name(&name) {
        return Err(CoreError::InvalidName(name).into());
    }
    let _guard = state.begin_write(&name)?;
    if state.store().contains(&name) {
        return Err(CoreError::NameCollision(name).into());
    }
    let (manifest, frames) = upload?;
    let manifest = manifest.ok_or_else(|| ApiError::bad_request("missing manifest part"))?;
    if manifest.name != name {
        return Err(ApiError::bad_request(format!(
            "manifest names {:?}, uploaded as {name:?}",
            manifest.name
        )));
    }
    let frame_count = frames.len();
    let store = state.store().clone();
    blocking(move || store.import(&manifest, &frames)).await?;
    info!(route = %name, frames = frame_count, "route uploaded");
    Ok((StatusCode::CREATED, Json(Uploaded { id: name, frame_count })).into_response())
}

async fn delete_route(State(state): State<AppState>, Path(name): Path<String>) -> ApiResult<StatusCode> {
    let _guard = state.begin_write(&name)?;
    let store = state.store().clone();
    let target = name.clone();
    blocking(move || store.delete(&target)).await?;
    state.0.memories.lock().unwrap().remove(&name);
    Ok(StatusCode::NO_CONTENT)
}

async fn create_session(State(state): State<AppState>, Json(req): Json<CreateSession>) -> ApiResult<Response> {
    let memory = state.memory(&req.route_name).await?;
    let settings = req.settings;
    let nav = blocking(move || NavSession::new(memory, settings)).await?;
    let handle = SessionHandle {
        session_id: Uuid::new_v4(),
        route_name: req.route_name,
        created_at: chrono::Utc::now(),
    };
    state.0.sessions.insert(handle.clone(), nav);
    debug!(session = %handle.session_id, route = %handle.route_name, "session created");
    Ok((StatusCode::CREATED, Json(handle)).into_response())
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    let session = state.session(&id)?;
    state.0.sessions.remove(session.handle.session_id);
    Ok(StatusCode::NO_CONTENT)
}

async fn submit_frame(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let session = state.session(&id)?;
    let frame = decode_gray(&body, FsPath::new("request body"))?;
    let mut nav = session.nav.clone().lock_owned().await;
    let updates = session.updates.clone();
    drop(session);
    let update = blocking(move || {
        let update = nav.process_frame(&frame)?;
        // Published while the session lock is held, so subscribers see frame_seq order.
        let _ = updates.send(update);
        Ok(update)
    })
    .await?;
    Ok(Json(update).into_response())
}

async fn stream_updates(
    State(state): State<AppState>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> ApiResult<Response> {
    let session = state.session(&id)?;
    Ok(ws.on_upgrade(move |socket| async move {
        let (history, rx) = session.subscribe().await;
        // Holding the session would keep its channel open after deletion.
        drop(session);
        if let Err(e) = forward_updates(socket, history, rx).await {
            debug!(error = %e, "update stream ended");
        }
    }))
}

async fn forward_updates(
    mut socket: WebSocket,
    history: Vec<viderex_core::nav::FamiliarityUpdate>,
    mut rx: broadcast::Receiver<viderex_core::nav::FamiliarityUpdate>,
) -> Result<(), axum::Error> {
    let text = |u: &viderex_core::nav::FamiliarityUpdate| Message::Text(serde_json::to_string(u).expect("serialisable").into());
    for u in &history {
        socket.send(text(u)).await?;
    }
    loop {
        tokio::select! {
            update = rx.recv() => match update {
                Ok(u) => socket.send(text(&u)).await?,
                Err(broadcast::error::RecvError::Lagged(n)) => {
                    warn!(missed = n, "update subscriber fell behind");
                    return socket.send(Message::Close(None)).await;
                }
                Err(broadcast::error::RecvError::Closed) => return socket.send(Message::Close(None)).await,
            },
            incoming = socket.recv() => match incoming {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return Ok(()),
                Some(Ok(_)) => {}
            },
        }
    }
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    config: ServiceConfig,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    let state = AppState::open(&config).map_err(io::Error::other)?;
    let sweeper = {
        let state = state.clone();
        let period = (config.idle_timeout / 4).clamp(Duration::from_millis(10), Duration::from_secs(60));
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(period);
            loop {
                tick.tick().await;
                let expired = state.0.sessions.expire();
                if expired > 0 {
                    debug!(expired, "expired idle sessions");
                }
            }
        })
    };
    info!(addr = %listener.local_addr()?, root = %config.store_root.display(), "serving");
    let result = axum::serve(listener, router(state, config.max_upload_bytes))
        .with_graceful_shutdown(shutdown)
        .await;
    sweeper.abort();
    result
}

/// A server running on its own thread, stopped on drop.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<io::Result<()>>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) -> io::Result<()> {
        self.shutdown_inner()
    }

    fn shutdown_inner(&mut self) -> io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().map_err(|_| io::Error::other("server thread panicked"))?,
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.shutdown_inner();
    }
}

/// Binds `addr` and serves on a background thread.
pub fn spawn(config: ServiceConfig, addr: SocketAddr) -> io::Result<ServerHandle> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let listener = runtime.block_on(TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    // Open the store up front so configuration errors surface here.
    AppState::open(&config).map_err(io::Error::other)?;
    let (tx, rx) = oneshot::channel();
    let thread = std::thread::spawn(move || {
        runtime.block_on(serve(listener, config, async {
            let _ = rx.await;
        }))
    });
    Ok(ServerHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
