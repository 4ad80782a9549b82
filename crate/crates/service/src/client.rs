//! Blocking client for a remote route store and its sessions.

use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::time::Duration;

use reqwest::blocking::multipart::{Form, Part};
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};
use uuid::Uuid;
use viderex_core::nav::{FamiliarityUpdate, FeedbackSettings};
use viderex_core::store::{checksum, read_manifest, read_verified_frames, CatalogEntry, LocalStore, RouteManifest};

use crate::api::{CreateSession, ErrorBody, SessionHandle, Uploaded, FRAME_PART, MANIFEST_PART};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("rejected: {0}")]
    Rejected(String),
    #[error("server error {status}: {message}")]
    Server { status: u16, message: String },
    #[error("corrupt transfer of {name}: expected checksum {expected}, got {actual}")]
    CorruptTransfer { name: String, expected: String, actual: String },
    #[error("network failure (retryable): {0}")]
    Network(#[from] reqwest::Error),
    #[error("update stream: {0}")]
    Stream(#[from] tungstenite::Error),
    #[error("unexpected message on update stream: {0}")]
    Protocol(String),
    #[error(transparent)]
    Local(#[from] viderex_core::Error),
}

impl ClientError {
    /// Whether retrying the same call may succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(self, ClientError::Network(_) | ClientError::Server { .. })
    }
}

pub type ClientResult<T> = Result<T, ClientError>;

#[derive(Clone, Debug)]
pub struct RemoteClient {
    base: String,
    http: Client,
}

fn check(response: Response) -> ClientResult<Response> {
    let status = response.status();
    if status.is_success() {
        return Ok(response);
    }
    let text = response.text().unwrap_or_default();
    let message = serde_json::from_str::<ErrorBody>(&text).map(|b| b.error).unwrap_or(text);
    Err(match status {
        StatusCode::NOT_FOUND => ClientError::NotFound(message),
        StatusCode::CONFLICT => ClientError::Conflict(message),
        s if s.is_client_error() => ClientError::Rejected(message),
        s => ClientError::Server {
            status: s.as_u16(),
            message,
        },
    })
}

impl RemoteClient {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> ClientResult<Self> {
        let http = Client::builder()
            .connect_timeout(Duration::from_secs(10))
            .timeout(Duration::from_secs(300))
            .build()?;
        Ok(Self {
            base: base.into().trim_end_matches('/').to_string(),
            http,
        })
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub fn list(&self) -> ClientResult<Vec<CatalogEntry>> {
        Ok(check(self.http.get(self.url("/routes")).send()?)?.json()?)
    }

    /// Uploads the route saved in `route_dir`; returns the remote route id.
    pub fn push(&self, route_dir: &Path) -> ClientResult<String> {
        let manifest = read_manifest(route_dir)?;
        let frames = read_verified_frames(route_dir, &manifest)?;
        self.push_bundle(&manifest, frames)
    }

    pub fn push_bundle(&self, manifest: &RouteManifest, frames: Vec<Vec<u8>>) -> ClientResult<String> {
        let json = serde_json::to_vec(manifest).map_err(viderex_core::Error::from)?;
        let mut form = Form::new().part(
            MANIFEST_PART,
            Part::bytes(json).mime_str("application/json")?,
        );
        for (file, bytes) in manifest.frame_files.iter().zip(frames) {
            let file_name = Path::new(file)
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            form = form.part(FRAME_PART, Part::bytes(bytes).file_name(file_name));
        }
        let url = self.url(&format!("/routes/{}", manifest.name));
        let uploaded: Uploaded = check(self.http.put(url).multipart(form).send()?)?.json()?;
        Ok(uploaded.id)
    }

    pub fn manifest(&self, name: &str) -> ClientResult<RouteManifest> {
        Ok(check(self.http.get(self.url(&format!("/routes/{name}"))).send()?)?.json()?)
    }

    pub fn frame(&self, name: &str, index: usize) -> ClientResult<Vec<u8>> {
        let url = self.url(&format!("/routes/{name}/frames/{index}"));
        Ok(check(self.http.get(url).send()?)?.bytes()?.to_vec())
    }

    /// Downloads manifest and frames, verifying the checksum before anything is written.
    pub fn fetch(&self, name: &str) -> ClientResult<(RouteManifest, Vec<Vec<u8>>)> {
        let manifest = self.manifest(name)?;
        let frames = (0..manifest.frame_files.len())
            .map(|i| self.frame(name, i))
            .collect::<ClientResult<Vec<_>>>()?;
        let actual = checksum(frames.iter().map(Vec::as_slice));
        if actual != manifest.checksum {
            return Err(ClientError::CorruptTransfer {
                name: name.to_string(),
                expected: manifest.checksum,
                actual,
            });
        }
        Ok((manifest, frames))
    }

    /// Downloads `name` into the store rooted at `dest_root`; returns the route directory.
    pub fn pull(&self, name: &str, dest_root: &Path) -> ClientResult<PathBuf> {
        let (manifest, frames) = self.fetch(name)?;
        let store = LocalStore::new(dest_root)?;
        store.import(&manifest, &frames)?;
        Ok(store.route_dir(name)?)
    }

    pub fn delete_route(&self, name: &str) -> ClientResult<()> {
        check(self.http.delete(self.url(&format!("/routes/{name}"))).send()?)?;
        Ok(())
    }

    pub fn create_session(&self, route_name: &str, settings: FeedbackSettings) -> ClientResult<SessionHandle> {
        let body = CreateSession {
            route_name: route_name.to_string(),
            settings,
        };
        Ok(check(self.http.post(self.url("/sessions")).json(&body).send()?)?.json()?)
    }

    /// Submits one encoded frame (PGM or any supported image format).
    pub fn submit_frame(&self, session: Uuid, frame: Vec<u8>) -> ClientResult<FamiliarityUpdate> {
        let url = self.url(&format!("/sessions/{session}/frames"));
        let response = self
            .http
            .post(url)
            .header(reqwest::header::CONTENT_TYPE, "image/x-portable-graymap")
            .body(frame)
            .send()?;
        Ok(check(response)?.json()?)
    }

    pub fn close_session(&self, session: Uuid) -> ClientResult<()> {
        check(self.http.delete(self.url(&format!("/sessions/{session}"))).send()?)?;
        Ok(())
    }

    /// Opens the update stream of `session`.
    pub fn updates(&self, session: Uuid) -> ClientResult<UpdateStream> {
        let ws_base = self
            .base
            .strip_prefix("http")
            .map(|rest| format!("ws{rest}"))
            .unwrap_or_else(|| self.base.clone());
        let (socket, _) = tungstenite::connect(format!("{ws_base}/sessions/{session}/updates"))?;
        Ok(UpdateStream { socket })
    }
}

/// Updates of one session in `frame_seq` order.
pub struct UpdateStream {
    socket: WebSocket<MaybeTlsStream<TcpStream>>,
}

impl UpdateStream {
    /// Next update, or `None` once the server closes the stream.
    pub fn next_update(&mut self) -> ClientResult<Option<FamiliarityUpdate>> {
        loop {
            match self.socket.read() {
                Ok(Message::Text(text)) => {
                    return serde_json::from_str(&text)
                        .map(Some)
                        .map_err(|e| ClientError::Protocol(e.to_string()))
                }
                Ok(Message::Close(_)) => return Ok(None),
                Ok(Message::Binary(_)) => return Err(ClientError::Protocol("binary message".into())),
                Ok(_) => {}
                Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => return Ok(None),
                Err(e) => return Err(e.into()),
            }
        }
    }

    /// Sets a read timeout on the underlying socket.
    pub fn set_read_timeout(&mut self, timeout: Option<Duration>) -> ClientResult<()> {
        if let MaybeTlsStream::Plain(stream) = self.socket.get_mut() {
            stream.set_read_timeout(timeout).map_err(viderex_core::Error::from)?;
        }
        Ok(())
    }

    pub fn close(mut self) -> ClientResult<()> {
        self.socket.close(None)?;
        Ok(())
    }
}
