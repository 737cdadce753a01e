use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use riskscope_core::router::{Turn, ViewTag};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub current_patient: Option<u64>,
    pub turns: Vec<Turn>,
    pub active_view: ViewTag,
    pub created_at: DateTime<Utc>,
}

impl Session {
    pub fn push_turn(&mut self, user: String, system: String) {
        self.turns.push(Turn { user, system });
    }
}

pub type SessionHandle = Arc<tokio::sync::Mutex<Session>>;

/// In-memory sessions. Each session sits behind its own async lock so one
/// session's turns are handled in order while other sessions proceed.
#[derive(Default)]
pub struct SessionStore {
    inner: Mutex<HashMap<String, SessionHandle>>,
}

impl SessionStore {
    pub fn create(&self, patient: Option<u64>, created_at: DateTime<Utc>) -> Session {
        let session = Session {
            id: uuid::Uuid::new_v4().simple().to_string(),
            current_patient: patient,
            turns: Vec::new(),
            active_view: ViewTag::Record,
            created_at,
        };
        self.inner
            .lock()
            .expect("session map lock")
            .insert(session.id.clone(), Arc::new(tokio::sync::Mutex::new(session.clone())));
        session
    }

    pub fn get(&self, id: &str) -> Option<SessionHandle> {
        self.inner.lock().expect("session map lock").get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("session map lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
