//! Live navigation sessions.
//!
//! Each session owns one `NavSession` behind an async mutex, so frames are
//! processed one at a time in the order their requests acquire the lock.
//! Every update is published on a broadcast channel while the lock is still
//! held; a subscriber that snapshots the history and subscribes under the
//! same lock therefore sees each update exactly once, in order.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use tokio::sync::broadcast;
use uuid::Uuid;
use viderex_core::nav::{FamiliarityUpdate, NavSession};

use crate::api::SessionHandle;

const UPDATE_BUFFER: usize = 4096;

pub(crate) struct Session {
    pub handle: SessionHandle,
    pub nav: Arc<tokio::sync::Mutex<NavSession>>,
    pub updates: broadcast::Sender<FamiliarityUpdate>,
    last_active: Mutex<Instant>,
}

impl Session {
    fn touch(&self) {
        *self.last_active.lock().unwrap() = Instant::now();
    }

    fn idle_for(&self) -> Duration {
        self.last_active.lock().unwrap().elapsed()
    }

    /// History so far plus a receiver for everything after it.
    pub async fn subscribe(&self) -> (Vec<FamiliarityUpdate>, broadcast::Receiver<FamiliarityUpdate>) {
        let nav = self.nav.lock().await;
        (nav.history().to_vec(), self.updates.subscribe())
    }
}

pub(crate) struct Registry {
    sessions: Mutex<HashMap<Uuid, Arc<Session>>>,
    idle_timeout: Duration,
}

impl Registry {
    pub fn new(idle_timeout: Duration) -> Self {
        Self {
            sessions: Mutex::new(HashMap::new()),
            idle_timeout,
        }
    }

    pub fn insert(&self, handle: SessionHandle, nav: NavSession) -> Arc<Session> {
        let (updates, _) = broadcast::channel(UPDATE_BUFFER);
        let session = Arc::new(Session {
            handle,
            nav: Arc::new(tokio::sync::Mutex::new(nav)),
            updates,
            last_active: Mutex::new(Instant::now()),
        });
        self.sessions
            .lock()
            .unwrap()
            .insert(session.handle.session_id, session.clone());
        session
    }

    /// Looks up a live session and marks it active; expired sessions are dropped.
    pub fn get(&self, id: Uuid) -> Option<Arc<Session>> {
        let mut sessions = self.sessions.lock().unwrap();
        let session = sessions.get(&id)?.clone();
        if session.idle_for() > self.idle_timeout {
            sessions.remove(&id);
            return None;
        }
        session.touch();
        Some(session)
    }

    pub fn remove(&self, id: Uuid) -> bool {
        self.sessions.lock().unwrap().remove(&id).is_some()
    }

    /// Drops every session idle longer than the timeout; returns how many.
    pub fn expire(&self) -> usize {
        let mut sessions = self.sessions.lock().unwrap();
        let before = sessions.len();
        sessions.retain(|_, s| s.idle_for() <= self.idle_timeout);
        before - sessions.len()
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }
}
