//! HTTP facade over the route store and navigation sessions.
//!
//! | method | path | body / result |
//! |---|---|---|
//! | GET | `/routes` | catalog: `[{name, created_at, frame_count}]` |
//! | PUT | `/routes/{name}` | multipart: one `manifest` part, then `frame` parts in manifest order |
//! | GET | `/routes/{name}` | manifest |
//! | DELETE | `/routes/{name}` | |
//! | GET | `/routes/{name}/frames/{i}` | stored frame bytes (PGM) |
//! | POST | `/sessions` | `{route_name, mode?, tone_min_hz?, tone_max_hz?, haptic?}` → session handle |
//! | POST | `/sessions/{id}/frames` | PGM body → `{frame_seq, best_index, diff, tone_hz, haptic}` |
//! | GET | `/sessions/{id}/updates` | WebSocket; one JSON update per text message, history first |
//! | DELETE | `/sessions/{id}` | |
//!
//! Errors carry `{"error": "..."}` with 400, 404 or 409. Sessions idle for
//! longer than the configured timeout are dropped and then report 404.

pub mod api;
mod client;
mod server;
mod sessions;

pub use client::{ClientError, ClientResult, RemoteClient, UpdateStream};
pub use server::{
    router, serve, spawn, AppState, ServerHandle, ServiceConfig, DEFAULT_IDLE_TIMEOUT, DEFAULT_MAX_UPLOAD_BYTES,
};
