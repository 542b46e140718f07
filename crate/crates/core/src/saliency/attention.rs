use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;

/// Which way attention is read for a word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionDirection {
    /// Mean of the column at the word's key position.
    #[default]
    Received,
    /// Mean of the row at the word's query position.
    Given,
}

/// Mean attention per position over the given layers, all heads and all
/// query (or key) positions. Each tensor is `[T, T]`, rows are queries.
pub fn attention_scores(layers: &[Vec<Tensor>], direction: AttentionDirection) -> Vec<f64> {
    let t = layers
        .iter()
        .flatten()
        .next()
        .map(Tensor::rows)
        .unwrap_or(0);
    let mut scores = vec![0.0; t];
    let mut count = 0usize;
    for a in layers.iter().flatten() {
        count += 1;
        for q in 0..t {
            for (k, &w) in a.row(q).iter().enumerate() {
                match direction {
                    AttentionDirection::Received => scores[k] += w,
                    AttentionDirection::Given => scores[q] += w,
                }
            }
        }
    }
    if count > 0 {
        let n = (count * t) as f64;
        scores.iter_mut().for_each(|s| *s /= n);
    }
    scores
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn m(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn uniform_attention_gives_equal_scores() {
        let u = m(&[vec![0.25; 4], vec![0.25; 4], vec![0.25; 4], vec![0.25; 4]]);
        let s = attention_scores(
            &[vec![u.clone(), u.clone()], vec![u]],
            AttentionDirection::Received,
        );
        assert!(s.iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn two_token_column_means() {
        // Head 1 columns: (0.9 + 0.4) / 2 = 0.65, (0.1 + 0.6) / 2 = 0.35.
        // Head 2 columns: (0.5 + 0.2) / 2 = 0.35, (0.5 + 0.8) / 2 = 0.65.
        let h1 = m(&[vec![0.9, 0.1], vec![0.4, 0.6]]);
        let h2 = m(&[vec![0.5, 0.5], vec![0.2, 0.8]]);
        let s = attention_scores(&[vec![h1.clone()]], AttentionDirection::Received);
        assert_abs_diff_eq!(s[0], 0.65, epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], 0.35, epsilon = 1e-12);
        let s = attention_scores(&[vec![h1], vec![h2]], AttentionDirection::Received);
        assert_abs_diff_eq!(s[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn three_token_last_layer() {
        let a = m(&[
            vec![0.2, 0.3, 0.5],
            vec![0.6, 0.2, 0.2],
            vec![0.1, 0.1, 0.8],
        ]);
        let s = attention_scores(&[vec![a]], AttentionDirection::Received);
        assert_abs_diff_eq!(s[0], 0.9 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], 0.6 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s[2], 1.5 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn given_direction_rows_sum_to_one() {
        let a = m(&[vec![0.2, 0.8], vec![0.7, 0.3]]);
        let s = attention_scores(&[vec![a]], AttentionDirection::Given);
        assert_abs_diff_eq!(s[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s[1], 0.5, epsilon = 1e-12);
    }
}
