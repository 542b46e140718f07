use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::saliency::{top_k_positions, Explanation, Method};
use crate::text::Sample;

/// Mean pairwise top-k overlap, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapMatrix {
    pub methods: Vec<Method>,
    pub k: usize,
    pub values: Vec<Vec<f64>>,
    /// Samples with fewer than `k` eligible words (their denominator is the
    /// eligible count).
    pub short_samples: Vec<String>,
}

pub fn overlap_matrix(
    samples: &[Sample],
    explanations: &[Explanation],
    methods: &[Method],
    k: usize,
    rank_by_abs: bool,
) -> Result<OverlapMatrix> {
    if k == 0 || samples.is_empty() || methods.is_empty() {
        return Err(Error::invalid("overlap needs k >= 1, samples, and methods"));
    }
    let index: HashMap<(&str, Method), &Explanation> = explanations
        .iter()
        .map(|e| ((e.sample_id.as_str(), e.method), e))
        .collect();
    let jn = methods.len();
    let mut sums = vec![vec![0.0; jn]; jn];
    let mut short_samples = Vec::new();
    let mut missing = Vec::new();
    for s in samples {
        let eligible = s.eligible_positions();
        let denom = k.min(eligible.len());
        if denom < k {
            short_samples.push(s.id.clone());
        }
        let mut tops: Vec<HashSet<usize>> = Vec::with_capacity(jn);
        for &m in methods {
            match index.get(&(s.id.as_str(), m)) {
                Some(e) => {
                    e.validate_against(s)?;
                    tops.push(
                        top_k_positions(&e.scores, &eligible, k, rank_by_abs)
                            .into_iter()
                            .collect(),
                    )
                }
                None => missing.push(format!("{}/{}", s.id, m)),
            }
        }
        if !missing.is_empty() || denom == 0 {
            continue;
        }
        for a in 0..jn {
            for b in 0..jn {
                sums[a][b] += tops[a].intersection(&tops[b]).count() as f64 / denom as f64;
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingExplanations(missing.join(", ")));
    }
    let n = samples.len() as f64;
    Ok(OverlapMatrix {
        methods: methods.to_vec(),
        k,
        values: sums
            .into_iter()
            .map(|row| row.into_iter().map(|v| 100.0 * v / n).collect())
            .collect(),
        short_samples,
    })
}

impl OverlapMatrix {
    pub fn to_text(&self) -> String {
        let names: Vec<&str> = self.methods.iter().map(|m| m.display_name()).collect();
        let w = names.iter().map(|n| n.len()).max().unwrap_or(0).max(8);
        let mut out = format!("{:<w$}", format!("top-{}", self.k));
        for n in &names {
            let _ = write!(out, " {n:>w$}");
        }
        out.push('\n');
        for (a, n) in names.iter().enumerate() {
            let _ = write!(out, "{n:<w$}");
            for v in &self.values[a] {
                let _ = write!(out, " {:>w$}", format!("{v:.1}"));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::saliency::explain_random;
    use crate::text::Split;

    fn with_scores(s: &Sample, m: Method, scores: Vec<f64>) -> Explanation {
        let mut e = explain_random(s, 0);
        e.method = m;
        e.scores = scores;
        e
    }

    #[test]
    fn half_overlap_and_diagonal() {
        let s = Sample::from_text("a", "w x y z", 1, Split::Eval).unwrap();
        let ex = vec![
            with_scores(&s, Method::Lime, vec![4.0, 3.0, 0.0, 0.0]),
            with_scores(&s, Method::Random, vec![0.0, 3.0, 4.0, 0.0]),
        ];
        let m = overlap_matrix(&[s], &ex, &[Method::Lime, Method::Random], 2, false).unwrap();
        assert_eq!(m.values[0][0], 100.0);
        assert_eq!(m.values[1][1], 100.0);
        assert_eq!(m.values[0][1], 50.0);
        assert_eq!(m.values[1][0], 50.0);
    }

    #[test]
    fn disjoint_sets_and_short_samples() {
        let s = Sample::from_text("a", "w x y z", 1, Split::Eval).unwrap();
        let ex = vec![
            with_scores(&s, Method::Lime, vec![4.0, 3.0, 0.0, 0.0]),
            with_scores(&s, Method::Random, vec![0.0, 0.0, 4.0, 3.0]),
        ];
        let m = overlap_matrix(
            std::slice::from_ref(&s),
            &ex,
            &[Method::Lime, Method::Random],
            2,
            false,
        )
        .unwrap();
        assert_eq!(m.values[0][1], 0.0);
        let m = overlap_matrix(&[s], &ex, &[Method::Lime, Method::Random], 10, false).unwrap();
        assert_eq!(m.values[0][1], 100.0);
        assert_eq!(m.short_samples, vec!["a".to_string()]);
    }
}
