use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::Sample;

/// The `k` most important eligible word positions, most important first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopK {
    pub k: usize,
    pub positions: Vec<usize>,
}

/// Ranks `eligible` positions by score (descending, lower index first on
/// ties) and keeps the first `k`.
pub fn top_k_positions(
    scores: &[f64],
    eligible: &[usize],
    k: usize,
    rank_by_abs: bool,
) -> Vec<usize> {
    let key = |p: usize| {
        let s = scores.get(p).copied().unwrap_or(0.0);
        if rank_by_abs {
            s.abs()
        } else {
            s
        }
    };
    let mut positions = eligible.to_vec();
    positions.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    positions.truncate(k);
    positions
}

/// Top-k words of a sample under the given scores. Punctuation and special
/// tokens are never selected.
pub fn top_k_words(scores: &[f64], sample: &Sample, k: usize, rank_by_abs: bool) -> Result<TopK> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if scores.len() != sample.len() {
        return Err(Error::data(format!(
            "{} scores for {} words in sample {}",
            scores.len(),
            sample.len(),
            sample.id
        )));
    }
    Ok(TopK {
        k,
        positions: top_k_positions(scores, &sample.eligible_positions(), k, rank_by_abs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::Split;
    use proptest::prelude::*;

    fn sample(text: &str) -> Sample {
        Sample::from_text("t", text, 1, Split::Eval).unwrap()
    }

    #[test]
    fn ties_go_to_lower_index() {
        let s = sample("a b c");
        assert_eq!(
            top_k_words(&[0.5, 0.9, 0.5], &s, 2, false)
                .unwrap()
                .positions,
            vec![1, 0]
        );
    }

    #[test]
    fn large_k_returns_all_eligible() {
        let s = sample("a , b <br> c");
        let t = top_k_words(&[0.1, 9.0, 0.3, 8.0, 0.2], &s, 10, false).unwrap();
        assert_eq!(t.positions, vec![2, 4, 0]);
    }

    #[test]
    fn signed_versus_absolute() {
        let s = sample("a b c");
        let scores = [-2.0, 1.0, 0.5];
        assert_eq!(
            top_k_words(&scores, &s, 1, false).unwrap().positions,
            vec![1]
        );
        assert_eq!(
            top_k_words(&scores, &s, 1, true).unwrap().positions,
            vec![0]
        );
    }

    #[test]
    fn zero_k_and_length_mismatch_rejected() {
        let s = sample("a b");
        assert!(top_k_words(&[1.0, 2.0], &s, 0, false).is_err());
        assert!(top_k_words(&[1.0], &s, 1, false).is_err());
    }

    proptest! {
        #[test]
        fn matches_full_sort(scores in proptest::collection::vec(-100i32..100, 1..30), k in 1usize..40) {
            let mut distinct: Vec<f64> = Vec::new();
            for (i, s) in scores.iter().enumerate() {
                distinct.push(*s as f64 + i as f64 * 1e-3);
            }
            let eligible: Vec<usize> = (0..distinct.len()).collect();
            let got = top_k_positions(&distinct, &eligible, k, false);
            let mut order = eligible.clone();
            order.sort_by(|&a, &b| distinct[b].partial_cmp(&distinct[a]).unwrap());
            order.truncate(k);
            prop_assert_eq!(got, order);
        }

        #[test]
        fn invariant_under_monotone_transform(scores in proptest::collection::vec(-5.0f64..5.0, 1..25), k in 1usize..30) {
            let eligible: Vec<usize> = (0..scores.len()).collect();
            let transformed: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() + 3.0).collect();
            prop_assert_eq!(
                top_k_positions(&scores, &eligible, k, false),
                top_k_positions(&transformed, &eligible, k, false)
            );
        }

        #[test]
        fn size_and_distinctness(scores in proptest::collection::vec(-5.0f64..5.0, 1..25), k in 1usize..30) {
            let eligible: Vec<usize> = (0..scores.len()).step_by(2).collect();
            let got = top_k_positions(&scores, &eligible, k, false);
            prop_assert_eq!(got.len(), k.min(eligible.len()));
            let mut d = got.clone();
            d.sort();
            d.dedup();
            prop_assert_eq!(d.len(), got.len());
        }
    }
}
