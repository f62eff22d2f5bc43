//! Engine clock and the append-only audit trail of mutations.

use std::sync::atomic::{AtomicI64, Ordering};

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::model::{ActorId, Timestamp};

/// Monotone timestamp source. Every call returns a strictly later instant
/// than the previous one, whatever the wall clock does.
#[derive(Debug)]
pub struct Clock {
    last_nanos: AtomicI64,
    /// When set, time advances by exactly this many nanoseconds per tick.
    manual_step: Option<i64>,
}

impl Clock {
    pub fn system() -> Self {
        Self {
            last_nanos: AtomicI64::new(i64::MIN),
            manual_step: None,
        }
    }

    /// Deterministic clock starting at `start`, advancing one second per tick.
    pub fn manual(start: Timestamp) -> Self {
        Self {
            last_nanos: AtomicI64::new(nanos(start) - 1_000_000_000),
            manual_step: Some(1_000_000_000),
        }
    }

    pub fn now(&self) -> Timestamp {
        let mut last = self.last_nanos.load(Ordering::SeqCst);
        loop {
            let next = match self.manual_step {
                Some(step) => last.saturating_add(step),
                None => wall_nanos().max(last.saturating_add(1)),
            };
            match self
                .last_nanos
                .compare_exchange(last, next, Ordering::SeqCst, Ordering::SeqCst)
            {
                Ok(_) => return from_nanos(next),
                Err(actual) => last = actual,
            }
        }
    }

    /// Never hand out a timestamp at or before `at` (used after loading state).
    pub fn advance_past(&self, at: Timestamp) {
        let n = nanos(at);
        self.last_nanos.fetch_max(n, Ordering::SeqCst);
    }
}

impl Default for Clock {
    fn default() -> Self {
        Self::system()
    }
}

fn wall_nanos() -> i64 {
    Utc::now().timestamp_nanos_opt().unwrap_or(i64::MAX)
}

fn nanos(at: Timestamp) -> i64 {
    at.timestamp_nanos_opt().unwrap_or(i64::MAX)
}

fn from_nanos(n: i64) -> Timestamp {
    Utc.timestamp_nanos(n)
}

/// One committed mutation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub actor: ActorId,
    pub operation: String,
    pub ids: Vec<String>,
    /// Elements and links this event brought to Validated.
    #[serde(default)]
    pub enrichment: u32,
    /// 1 when this event is a link proposal reusing a similar-events hit.
    #[serde(default)]
    pub absorption: u32,
}
