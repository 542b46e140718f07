use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Fraction of compared tasks where expert and crowd outcomes agree.
    pub agreement: f64,
    pub compared: usize,
    /// Tasks without an expert label or ground truth.
    pub skipped: Vec<String>,
}

/// Uniformly samples `n` task ids (all of them if fewer), sorted.
pub fn sample_audit_tasks(task_ids: &[String], n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<String> = index::sample(&mut rng, task_ids.len(), n.min(task_ids.len()))
        .into_iter()
        .map(|i| task_ids[i].clone())
        .collect();
    out.sort();
    out
}

/// Agreement between experts and the aggregated crowd. The expert outcome of
/// a task is 1 when the expert label equals the ground truth.
pub fn audit_agreement(
    crowd_outcomes: &BTreeMap<String, u8>,
    expert_labels: &BTreeMap<String, usize>,
    ground_truth: &BTreeMap<String, usize>,
) -> Result<AuditReport> {
    let mut agree = 0usize;
    let mut compared = 0usize;
    let mut skipped = Vec::new();
    for (task, &crowd) in crowd_outcomes {
        match (expert_labels.get(task), ground_truth.get(task)) {
            (Some(&label), Some(&truth)) => {
                compared += 1;
                if u8::from(label == truth) == crowd {
                    agree += 1;
                }
            }
            _ => skipped.push(task.clone()),
        }
    }
    if compared == 0 {
        return Err(Error::data(
            "no audited task has both an expert label and ground truth",
        ));
    }
    Ok(AuditReport {
        agreement: agree as f64 / compared as f64,
        compared,
        skipped,
    })
}
