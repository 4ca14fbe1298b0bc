//! In-memory chat sessions with an idle timeout.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant, SystemTime};

use railgate_core::DialogueState;

pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(30 * 60);

#[derive(Debug)]
pub struct ChatSession {
    pub id: String,
    pub config_id: String,
    pub created_at: SystemTime,
    /// Held for the whole turn, so turns of one session never interleave.
    state: Mutex<DialogueState>,
    last_active: Mutex<Instant>,
}

impl ChatSession {
    pub fn lock(&self) -> MutexGuard<'_, DialogueState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn touch(&self) {
        *self.last_active.lock().unwrap_or_else(|e| e.into_inner()) = Instant::now();
    }

    fn idle_for(&self, now: Instant) -> Duration {
        now.saturating_duration_since(*self.last_active.lock().unwrap_or_else(|e| e.into_inner()))
    }
}

#[derive(Debug)]
pub struct SessionStore {
    sessions: Mutex<HashMap<String, Arc<ChatSession>>>,
    ttl: Duration,
}

impl Default for SessionStore {
    fn default() -> Self {
        SessionStore::new(DEFAULT_SESSION_TTL)
    }
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        SessionStore {
            sessions: Mutex::new(HashMap::new()),
            ttl,
        }
    }

    fn map(&self) -> MutexGuard<'_, HashMap<String, Arc<ChatSession>>> {
        self.sessions.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn create(&self, config_id: &str, state: DialogueState) -> Arc<ChatSession> {
        let session = Arc::new(ChatSession {
            id: uuid::Uuid::new_v4().to_string(),
            config_id: config_id.to_string(),
            created_at: SystemTime::now(),
            state: Mutex::new(state),
            last_active: Mutex::new(Instant::now()),
        });
        self.map().insert(session.id.clone(), session.clone());
        session
    }

    /// The live session with `id`, marked active. Expired sessions are
    /// dropped instead.
    pub fn get(&self, id: &str) -> Option<Arc<ChatSession>> {
        let mut map = self.map();
        let session = map.get(id)?.clone();
        if session.idle_for(Instant::now()) > self.ttl {
            map.remove(id);
            return None;
        }
        session.touch();
        Some(session)
    }

    /// Removes every expired session and returns how many went.
    pub fn sweep(&self) -> usize {
        let now = Instant::now();
        let mut map = self.map();
        let before = map.len();
        map.retain(|_, s| s.idle_for(now) <= self.ttl);
        before - map.len()
    }

    pub fn len(&self) -> usize {
        self.map().len()
    }

    pub fn is_empty(&self) -> bool {
        self.map().is_empty()
    }

    pub fn ttl(&self) -> Duration {
        self.ttl
    }
}
