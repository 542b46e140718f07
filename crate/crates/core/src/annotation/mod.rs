//! Session bookkeeping, annotation storage, quality filtering, and the expert
//! audit. The HTTP layer lives in the CLI crate; everything here is
//! synchronous and takes explicit timestamps.

mod audit;
mod store;

pub use audit::{audit_agreement, sample_audit_tasks, AuditReport};
pub use store::{
    read_export, write_export, AnnotationStore, ExportRecord, FilterReport, NextTask, Progress,
    StoreOptions, SubmitOutcome,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Complete,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub worker_token: String,
    pub batch: usize,
    /// Index of the next unanswered task in the batch.
    pub cursor: usize,
    pub started_at: u64,
    pub finished_at: Option<u64>,
    pub status: SessionStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejection_reason: Option<String>,
}

/// One worker label. Label 0 means "I don't know"; a task a worker never saw
/// simply has no record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub task_id: String,
    pub worker_token: String,
    pub session_id: String,
    pub label: usize,
    pub elapsed_ms: u64,
    pub submitted_at: u64,
}

/// Session-level quality filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QualityRule {
    /// Sessions finished faster than this are rejected.
    pub min_total_duration_ms: u64,
    /// Reject sessions whose labels are all identical.
    pub reject_all_same_label: bool,
}

impl Default for QualityRule {
    fn default() -> Self {
        Self {
            min_total_duration_ms: 120_000,
            reject_all_same_label: true,
        }
    }
}

impl QualityRule {
    pub fn validate(&self) -> Result<()> {
        if self.min_total_duration_ms == 0 {
            return Err(Error::invalid("minimum session duration must be positive"));
        }
        Ok(())
    }

    /// Reason for rejecting a finished session, if any.
    pub fn judge(&self, session: &Session, labels: &[usize]) -> Option<String> {
        let duration = session
            .finished_at
            .unwrap_or(session.started_at)
            .saturating_sub(session.started_at);
        if duration < self.min_total_duration_ms {
            return Some(format!(
                "finished in {:.1} s (minimum {:.1} s)",
                duration as f64 / 1000.0,
                self.min_total_duration_ms as f64 / 1000.0
            ));
        }
        if self.reject_all_same_label && labels.len() > 1 && labels.iter().all(|&l| l == labels[0])
        {
            return Some(format!("all {} labels were {}", labels.len(), labels[0]));
        }
        None
    }
}
