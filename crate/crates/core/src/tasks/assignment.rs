use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Task;
use crate::error::{Error, Result};

/// Worker batches. Every batch holds at most one task per sample and every
/// task appears `replication` times overall.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentPlan {
    pub batches: Vec<Vec<String>>,
    pub replication: usize,
}

impl AssignmentPlan {
    /// Checks the plan invariants against the task list.
    pub fn verify(&self, tasks: &[Task]) -> Result<()> {
        let sample_of: BTreeMap<&str, &str> = tasks
            .iter()
            .map(|t| (t.task_id.as_str(), t.sample_id.as_str()))
            .collect();
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for (b, batch) in self.batches.iter().enumerate() {
            let mut samples = std::collections::HashSet::new();
            for id in batch {
                let s = sample_of.get(id.as_str()).ok_or_else(|| {
                    Error::data(format!("batch {b} references unknown task {id}"))
                })?;
                if !samples.insert(*s) {
                    return Err(Error::data(format!(
                        "batch {b} holds two tasks of sample {s}"
                    )));
                }
                *counts.entry(id.as_str()).or_default() += 1;
            }
        }
        for t in tasks {
            let n = counts.get(t.task_id.as_str()).copied().unwrap_or(0);
            if n != self.replication {
                return Err(Error::data(format!(
                    "task {} appears {n} times (expected {})",
                    t.task_id, self.replication
                )));
            }
        }
        Ok(())
    }
}

/// Builds the plan in rounds. In each round every sample's variants are put
/// in a seeded random order; the v-th variant of every sample forms a layer
/// with exactly one task per sample, and each layer is cut into batches of at
/// most `batch_size`. Rounds are emitted in order, so the first batches cover
/// each task once before any task repeats.
pub fn build_assignment(
    tasks: &[Task],
    replication: usize,
    batch_size: usize,
    seed: u64,
) -> Result<AssignmentPlan> {
    if replication == 0 || batch_size == 0 {
        return Err(Error::invalid(
            "replication and batch size must be positive",
        ));
    }
    let mut by_sample: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for t in tasks {
        by_sample
            .entry(t.sample_id.as_str())
            .or_default()
            .push(t.task_id.as_str());
    }
    let n = by_sample.len();
    if n == 0 {
        return Err(Error::invalid("no tasks to assign"));
    }
    if batch_size > n {
        return Err(Error::invalid(format!(
            "batch size {batch_size} exceeds the {n} samples; a batch would need two tasks of one sample"
        )));
    }
    let variants = by_sample.values().next().map(Vec::len).unwrap_or(0);
    if let Some((s, v)) = by_sample.iter().find(|(_, v)| v.len() != variants) {
        return Err(Error::invalid(format!(
            "sample {s} has {} tasks but others have {variants}",
            v.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chunks = n.div_ceil(batch_size);
    let mut batches = Vec::with_capacity(replication * variants * chunks);
    let samples: Vec<&Vec<&str>> = by_sample.values().collect();
    for _ in 0..replication {
        let orders: Vec<Vec<&str>> = samples
            .iter()
            .map(|v| {
                let mut v = (*v).clone();
                v.shuffle(&mut rng);
                v
            })
            .collect();
        for slot in 0..variants {
            let mut layer: Vec<&str> = orders.iter().map(|o| o[slot]).collect();
            layer.shuffle(&mut rng);
            // Near-equal chunks so no batch is much smaller than the others.
            let mut start = 0;
            for c in 0..chunks {
                let len = n / chunks + usize::from(c < n % chunks);
                batches.push(
                    layer[start..start + len]
                        .iter()
                        .map(|s| s.to_string())
                        .collect(),
                );
                start += len;
            }
        }
    }
    let plan = AssignmentPlan {
        batches,
        replication,
    };
    debug_assert!(plan.verify(tasks).is_ok());
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saliency::Method;
    use proptest::prelude::*;

    fn tasks(n: usize, variants: usize) -> Vec<Task> {
        let mut out = Vec::new();
        for s in 0..n {
            for v in 0..variants {
                out.push(Task {
                    task_id: format!("t{s}_{v}"),
                    sample_id: format!("s{s}"),
                    method: Method::Random,
                    k: v + 1,
                    shown_positions: vec![],
                    rendered: String::new(),
                    label_options: vec![],
                    ground_truth: 1,
                });
            }
        }
        out
    }

    #[test]
    fn full_scale_plan() {
        let t = tasks(100, 40);
        let plan = build_assignment(&t, 5, 100, 3).unwrap();
        assert_eq!(plan.batches.len(), 200);
        assert!(plan.batches.iter().all(|b| b.len() == 100));
        plan.verify(&t).unwrap();
    }

    #[test]
    fn single_batch() {
        let t = tasks(7, 1);
        let plan = build_assignment(&t, 1, 7, 0).unwrap();
        assert_eq!(plan.batches.len(), 1);
        assert_eq!(plan.batches[0].len(), 7);
    }

    #[test]
    fn infeasible_batch_size_rejected() {
        assert!(build_assignment(&tasks(3, 2), 1, 4, 0).is_err());
        assert!(build_assignment(&tasks(3, 2), 0, 2, 0).is_err());
    }

    #[test]
    fn deterministic() {
        let t = tasks(10, 4);
        assert_eq!(
            build_assignment(&t, 2, 5, 9).unwrap(),
            build_assignment(&t, 2, 5, 9).unwrap()
        );
    }

    proptest! {
        #[test]
        fn invariants_hold(n in 1usize..20, v in 1usize..6, r in 1usize..4, b in 1usize..20, seed in any::<u64>()) {
            let b = b.min(n);
            let t = tasks(n, v);
            let plan = build_assignment(&t, r, b, seed).unwrap();
            prop_assert!(plan.verify(&t).is_ok());
            prop_assert!(plan.batches.iter().all(|x| x.len() <= b));
        }
    }
}
