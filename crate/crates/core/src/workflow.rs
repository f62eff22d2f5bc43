//! Technical-fact lifecycle across the short loop (advisory issued) and the
//! long loop (consolidation into a pathology), and knowledge-transfer
//! counters.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{KbError, Result};
use crate::model::{ActorId, ElementId, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WorkflowState {
    Declared,
    UnderAnalysis,
    AvisIssued,
    Consolidated,
}

impl WorkflowState {
    pub const ALL: [WorkflowState; 4] = [
        WorkflowState::Declared,
        WorkflowState::UnderAnalysis,
        WorkflowState::AvisIssued,
        WorkflowState::Consolidated,
    ];

    /// The single state reachable from this one, if any.
    pub fn next(self) -> Option<WorkflowState> {
        match self {
            WorkflowState::Declared => Some(WorkflowState::UnderAnalysis),
            WorkflowState::UnderAnalysis => Some(WorkflowState::AvisIssued),
            WorkflowState::AvisIssued => Some(WorkflowState::Consolidated),
            WorkflowState::Consolidated => None,
        }
    }
}

impl fmt::Display for WorkflowState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A past fact surfaced as similar, with its validated advisories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarEvent {
    pub fait: ElementId,
    pub score: f64,
    pub advisories: Vec<ElementId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub state: WorkflowState,
    pub actor: ActorId,
    pub at: Timestamp,
    /// Similar-events snapshot taken when analysis started.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similar: Option<Vec<SimilarEvent>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaitState {
    pub fait: ElementId,
    pub state: WorkflowState,
    pub analyst: Option<ActorId>,
    pub history: Vec<HistoryEntry>,
}

impl FaitState {
    pub fn declared(fait: ElementId, actor: ActorId, at: Timestamp) -> Self {
        Self {
            fait,
            state: WorkflowState::Declared,
            analyst: None,
            history: vec![HistoryEntry {
                state: WorkflowState::Declared,
                actor,
                at,
                similar: None,
            }],
        }
    }

    /// Moves to `to`, which must be the single successor of the current state.
    pub fn advance(&mut self, to: WorkflowState, actor: ActorId, at: Timestamp) -> Result<()> {
        self.ensure_can_advance(to)?;
        self.state = to;
        self.history.push(HistoryEntry {
            state: to,
            actor,
            at,
            similar: None,
        });
        Ok(())
    }

    pub fn ensure_can_advance(&self, to: WorkflowState) -> Result<()> {
        if self.state.next() == Some(to) {
            Ok(())
        } else {
            Err(KbError::IllegalTransition {
                fait: self.fait.to_string(),
                message: format!("cannot move from {} to {}", self.state, to),
            })
        }
    }

    /// The snapshot recorded when analysis started, if any.
    pub fn similar_snapshot(&self) -> Option<&[SimilarEvent]> {
        self.history
            .iter()
            .find(|h| h.state == WorkflowState::UnderAnalysis)
            .and_then(|h| h.similar.as_deref())
    }

    /// History starts at Declared, follows the single allowed edge at each
    /// step, is chronological, and ends at the current state.
    pub fn is_consistent(&self) -> bool {
        let Some(first) = self.history.first() else {
            return false;
        };
        if first.state != WorkflowState::Declared {
            return false;
        }
        for pair in self.history.windows(2) {
            if pair[0].state.next() != Some(pair[1].state) || pair[1].at < pair[0].at {
                return false;
            }
        }
        self.history.last().map(|h| h.state) == Some(self.state)
    }
}

/// Transmission + Absorption & Use + Enrichment counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TransferMetrics {
    /// Element and dossier reads.
    pub transmission: u64,
    /// Links proposed from a fact under analysis to something its similar-events snapshot surfaced.
    pub absorption_use: u64,
    /// Elements and links that reached Validated through interactive operations.
    pub enrichment: u64,
}

/// Inclusive time range; open ends are unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TimeWindow {
    pub from: Option<Timestamp>,
    pub to: Option<Timestamp>,
}

impl TimeWindow {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn contains(&self, at: Timestamp) -> bool {
        self.from.is_none_or(|f| at >= f) && self.to.is_none_or(|t| at <= t)
    }
}
