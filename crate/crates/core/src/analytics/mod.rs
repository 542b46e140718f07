//! Flip detection, top-k overlap, confidence-drop faithfulness metrics, and
//! per-method counts on misclassified samples.

mod faithfulness;
mod flips;
mod overlap;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use faithfulness::{
    faithfulness, faithfulness_table, Faithfulness, FaithfulnessTable, Removal,
};
pub use flips::{classify, detect_flips, FlipCategory, FlipReport, MethodFlipCounts};
pub use overlap::{overlap_matrix, OverlapMatrix};

use crate::aggregation::AggregateMatrix;
use crate::saliency::Method;

/// Unweighted counts of recovered samples per method and k.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MisclassifiedReport {
    pub methods: Vec<Method>,
    pub ks: Vec<usize>,
    pub samples: usize,
    /// `counts[j][k]`.
    pub counts: Vec<Vec<usize>>,
}

pub fn misclassified_report(a: &AggregateMatrix) -> MisclassifiedReport {
    let counts = (0..a.methods.len())
        .map(|j| {
            (0..a.ks.len())
                .map(|k| (0..a.samples.len()).map(|i| a.get(i, j, k) as usize).sum())
                .collect()
        })
        .collect();
    MisclassifiedReport {
        methods: a.methods.clone(),
        ks: a.ks.clone(),
        samples: a.samples.len(),
        counts,
    }
}

impl MisclassifiedReport {
    pub fn to_text(&self) -> String {
        let mut out = format!("{:<20}", "Method");
        for k in &self.ks {
            let _ = write!(out, " {:>6}", format!("k={k}"));
        }
        out.push('\n');
        for (j, m) in self.methods.iter().enumerate() {
            let _ = write!(out, "{:<20}", m.display_name());
            for c in &self.counts[j] {
                let _ = write!(out, " {c:>6}");
            }
            out.push('\n');
        }
        out
    }
}
