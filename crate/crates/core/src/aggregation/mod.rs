//! Majority-vote aggregation of worker labels, per-method accuracy tables,
//! k-weights, method scores, and the ranked report.

mod report;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub use report::{competition_ranks, ScoreReport, WeightBasis};

use crate::error::{Error, Result};
use crate::saliency::Method;
use crate::tasks::Task;

/// 1 iff the true class `truth` gets strictly more votes than every other
/// option, "I don't know" (0) included.
pub fn majority_outcome(labels: &[usize], truth: usize) -> u8 {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let own = counts.get(&truth).copied().unwrap_or(0);
    let beaten = counts.iter().all(|(&l, &c)| l == truth || own > c);
    u8::from(own > 0 && beaten)
}

/// Binary outcomes over the full (sample, method, k) grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMatrix {
    pub samples: Vec<String>,
    pub methods: Vec<Method>,
    pub ks: Vec<usize>,
    /// `values[((i * J) + j) * K + k]`.
    pub values: Vec<u8>,
    /// Annotation count per cell, same layout as `values`.
    pub counts: Vec<usize>,
    /// Tasks that had no annotation (scored 0).
    pub unannotated: Vec<String>,
}

impl AggregateMatrix {
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.methods.len() + j) * self.ks.len() + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> u8 {
        self.values[self.index(i, j, k)]
    }

    /// `p[j][k]`: fraction of samples whose task was recovered.
    pub fn accuracy_table(&self) -> AccuracyTable {
        let n = self.samples.len() as f64;
        let p = (0..self.methods.len())
            .map(|j| {
                (0..self.ks.len())
                    .map(|k| {
                        (0..self.samples.len())
                            .map(|i| self.get(i, j, k) as f64)
                            .sum::<f64>()
                            / n
                    })
                    .collect()
            })
            .collect();
        AccuracyTable {
            methods: self.methods.clone(),
            ks: self.ks.clone(),
            p,
        }
    }

    /// Outcome per task id.
    pub fn outcomes(&self, tasks: &[Task]) -> BTreeMap<String, u8> {
        let si: HashMap<&str, usize> = self
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mj: HashMap<Method, usize> = self
            .methods
            .iter()
            .enumerate()
            .map(|(j, &m)| (m, j))
            .collect();
        let kk: HashMap<usize, usize> = self.ks.iter().enumerate().map(|(k, &v)| (v, k)).collect();
        tasks
            .iter()
            .map(|t| {
                let v = self.get(si[t.sample_id.as_str()], mj[&t.method], kk[&t.k]);
                (t.task_id.clone(), v)
            })
            .collect()
    }
}

/// Accuracy `p[j][k]` as fractions in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub methods: Vec<Method>,
    pub ks: Vec<usize>,
    pub p: Vec<Vec<f64>>,
}

fn method_order(present: &BTreeSet<Method>) -> Vec<Method> {
    let mut out: Vec<Method> = Method::STANDARD
        .into_iter()
        .filter(|m| present.contains(m))
        .collect();
    out.extend(
        present
            .iter()
            .copied()
            .filter(|m| !Method::STANDARD.contains(m)),
    );
    out
}

/// Aggregates `(task_id, label)` pairs over the task grid.
pub fn aggregate<'a>(
    tasks: &[Task],
    annotations: impl IntoIterator<Item = (&'a str, usize)>,
) -> Result<AggregateMatrix> {
    if tasks.is_empty() {
        return Err(Error::invalid("no tasks to aggregate"));
    }
    let samples: BTreeSet<&str> = tasks.iter().map(|t| t.sample_id.as_str()).collect();
    let methods = method_order(&tasks.iter().map(|t| t.method).collect());
    let ks: BTreeSet<usize> = tasks.iter().map(|t| t.k).collect();
    let mut m = AggregateMatrix {
        samples: samples.iter().map(|s| s.to_string()).collect(),
        methods,
        ks: ks.into_iter().collect(),
        values: Vec::new(),
        counts: Vec::new(),
        unannotated: Vec::new(),
    };
    let cells = m.samples.len() * m.methods.len() * m.ks.len();
    if cells != tasks.len() {
        return Err(Error::data(format!(
            "{} tasks do not form a full grid of {} samples x {} methods x {} k values",
            tasks.len(),
            m.samples.len(),
            m.methods.len(),
            m.ks.len()
        )));
    }

    let mut labels: HashMap<&str, Vec<usize>> = tasks
        .iter()
        .map(|t| (t.task_id.as_str(), Vec::new()))
        .collect();
    for (task_id, label) in annotations {
        labels
            .get_mut(task_id)
            .ok_or_else(|| Error::data(format!("annotation references unknown task {task_id}")))?
            .push(label);
    }

    let si: HashMap<&str, usize> = m
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mj: HashMap<Method, usize> = m.methods.iter().enumerate().map(|(j, &x)| (x, j)).collect();
    let kk: HashMap<usize, usize> = m.ks.iter().enumerate().map(|(k, &v)| (v, k)).collect();
    m.values = vec![0; cells];
    m.counts = vec![0; cells];
    let mut filled = vec![false; cells];
    for t in tasks {
        let idx = m.index(si[t.sample_id.as_str()], mj[&t.method], kk[&t.k]);
        if std::mem::replace(&mut filled[idx], true) {
            return Err(Error::data(format!(
                "two tasks for {}/{}/k={}",
                t.sample_id, t.method, t.k
            )));
        }
        let l = &labels[t.task_id.as_str()];
        if l.is_empty() {
            m.unannotated.push(t.task_id.clone());
        }
        m.counts[idx] = l.len();
        m.values[idx] = majority_outcome(l, t.ground_truth);
    }
    m.unannotated.sort();
    Ok(m)
}

/// `w_k = Σ_j Σ_k' p[j][k'] / (K² · Σ_j p[j][k])` over the given rows.
pub fn weights(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = p.first().map(Vec::len).unwrap_or(0);
    if k == 0 || p.iter().any(|row| row.len() != k) {
        return Err(Error::invalid(
            "accuracy table must be a non-empty rectangle",
        ));
    }
    let cols: Vec<f64> = (0..k).map(|c| p.iter().map(|row| row[c]).sum()).collect();
    if let Some(c) = cols.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::invalid(format!(
            "column {c} of the accuracy table sums to zero; weights are undefined"
        )));
    }
    let total: f64 = cols.iter().sum();
    let kk = (k * k) as f64;
    Ok(cols.iter().map(|&c| total / (kk * c)).collect())
}

/// `s_j = Σ_k w_k p[j][k]`.
pub fn scores(p: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    p.iter()
        .map(|row| row.iter().zip(w).map(|(a, b)| a * b).sum())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn strict_plurality() {
        assert_eq!(majority_outcome(&[1, 1, 1, 2, 2], 1), 1);
        assert_eq!(majority_outcome(&[1, 1, 0, 0, 2], 1), 0);
        assert_eq!(majority_outcome(&[1, 1, 0], 1), 1);
        assert_eq!(majority_outcome(&[], 1), 0);
        assert_eq!(majority_outcome(&[0, 0, 0], 0), 1);
        assert_eq!(majority_outcome(&[2], 1), 0);
    }

    #[test]
    fn equal_columns_give_uniform_weights() {
        let w = weights(&[vec![0.5, 0.5, 0.5], vec![0.2, 0.2, 0.2]]).unwrap();
        for v in w {
            assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-12);
        }
        assert_eq!(weights(&[vec![0.3], vec![0.9]]).unwrap(), vec![1.0]);
        assert!(weights(&[vec![0.0, 0.5]]).is_err());
    }

    proptest! {
        #[test]
        fn weight_sum_at_least_one(p in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 4), 1..8)) {
            let w = weights(&p).unwrap();
            prop_assert!(w.iter().sum::<f64>() >= 1.0 - 1e-12);
            prop_assert!(w.iter().all(|&x| x > 0.0));
        }

        #[test]
        fn homogeneous(p in proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, 3), 1..6), lambda in 0.1f64..10.0) {
            let scaled: Vec<Vec<f64>> = p.iter().map(|r| r.iter().map(|v| v * lambda).collect()).collect();
            let w = weights(&p).unwrap();
            let ws = weights(&scaled).unwrap();
            for (a, b) in w.iter().zip(&ws) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            let s = scores(&p, &w);
            let ss = scores(&scaled, &ws);
            for (a, b) in s.iter().zip(&ss) {
                prop_assert!((a * lambda - b).abs() < 1e-9);
            }
        }

        #[test]
        fn aggregation_ignores_order(mut labels in proptest::collection::vec(0usize..4, 0..9), truth in 1usize..4) {
            let a = majority_outcome(&labels, truth);
            labels.reverse();
            prop_assert_eq!(a, majority_outcome(&labels, truth));
            labels.sort();
            prop_assert_eq!(a, majority_outcome(&labels, truth));
        }
    }
}
