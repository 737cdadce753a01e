//! Append-only interaction log, one JSON-lines file per UTC day.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ViewOpened,
    HelpClicked,
    ChatQuery,
    ChatAnswer,
    RecommendationRequested,
}

impl EventKind {
    pub fn is_chat(self) -> bool {
        matches!(self, EventKind::ChatQuery | EventKind::ChatAnswer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub session_id: String,
    pub timestamp: DateTime<Utc>,
    pub kind: EventKind,
    pub payload: Value,
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

struct Writer {
    last: Option<DateTime<Utc>>,
    /// Events whose write failed; still returned by exports.
    unpersisted: Vec<InteractionEvent>,
}

/// Single-writer log shared by all handlers. Appends are serialized by one
/// lock, and timestamps never go backwards even if the clock does.
pub struct EventLog {
    dir: PathBuf,
    clock: Box<dyn Clock>,
    writer: Mutex<Writer>,
}

pub fn day_file(dir: &Path, ts: DateTime<Utc>) -> PathBuf {
    dir.join(format!("events-{}.jsonl", ts.format("%Y-%m-%d")))
}

impl EventLog {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self::with_clock(dir, Box::new(SystemClock))
    }

    pub fn with_clock(dir: impl Into<PathBuf>, clock: Box<dyn Clock>) -> Self {
        Self {
            dir: dir.into(),
            clock,
            writer: Mutex::new(Writer {
                last: None,
                unpersisted: Vec::new(),
            }),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Records an event. A failed disk write is returned as a warning; the
    /// event is still kept in memory for export.
    pub fn append(&self, session_id: &str, kind: EventKind, payload: Value) -> (InteractionEvent, Option<String>) {
        let mut w = self.writer.lock().expect("event log lock");
        let now = self.clock.now();
        let timestamp = match w.last {
            Some(last) if last > now => last,
            _ => now,
        };
        w.last = Some(timestamp);
        let event = InteractionEvent {
            session_id: session_id.to_string(),
            timestamp,
            kind,
            payload,
        };
        let warning = self.persist(&event).err().map(|e| {
            tracing::warn!(error = %e, "interaction event not persisted");
            format!("interaction log write failed: {e}")
        });
        if warning.is_some() {
            w.unpersisted.push(event.clone());
        }
        (event, warning)
    }

    fn persist(&self, event: &InteractionEvent) -> std::io::Result<()> {
        fs::create_dir_all(&self.dir)?;
        let mut line = serde_json::to_string(event)?;
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(day_file(&self.dir, event.timestamp))?;
        f.write_all(line.as_bytes())
    }

    /// All events of a session across every day file, in time order. Lines
    /// that fail to parse are skipped.
    pub fn export(&self, session_id: &str) -> Vec<InteractionEvent> {
        let w = self.writer.lock().expect("event log lock");
        let mut files: Vec<PathBuf> = fs::read_dir(&self.dir)
            .map(|rd| {
                rd.filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| {
                        p.file_name()
                            .and_then(|n| n.to_str())
                            .is_some_and(|n| n.starts_with("events-") && n.ends_with(".jsonl"))
                    })
                    .collect()
            })
            .unwrap_or_default();
        files.sort();
        let mut events: Vec<InteractionEvent> = files
            .iter()
            .filter_map(|p| fs::read_to_string(p).ok())
            .flat_map(|text| {
                text.lines()
                    .filter_map(|l| serde_json::from_str::<InteractionEvent>(l).ok())
                    .collect::<Vec<_>>()
            })
            .filter(|e| e.session_id == session_id)
            .collect();
        events.extend(w.unpersisted.iter().filter(|e| e.session_id == session_id).cloned());
        events.sort_by_key(|e| e.timestamp);
        events
    }
}

/// Per-session counts of chat and view events.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngagementCounts {
    pub chat_events: usize,
    pub view_events: usize,
}

pub fn engagement(events: &[InteractionEvent]) -> EngagementCounts {
    EngagementCounts {
        chat_events: events.iter().filter(|e| e.kind.is_chat()).count(),
        view_events: events.iter().filter(|e| e.kind == EventKind::ViewOpened).count(),
    }
}

/// Mean chat and view event counts per session.
pub fn mean_engagement(per_session: &[EngagementCounts]) -> (f64, f64) {
    if per_session.is_empty() {
        return (0.0, 0.0);
    }
    let n = per_session.len() as f64;
    let chat = per_session.iter().map(|c| c.chat_events as f64).sum::<f64>() / n;
    let view = per_session.iter().map(|c| c.view_events as f64).sum::<f64>() / n;
    (chat, view)
}
