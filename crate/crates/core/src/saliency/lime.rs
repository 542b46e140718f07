use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::softmax;
use crate::error::{Error, Result};
use crate::text::{AttributionModel, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimeOptions {
    pub n_samples: usize,
    /// Kernel width over cosine distance.
    pub kernel_width: f64,
    /// Ridge penalty on the word coefficients (not the intercept).
    pub ridge: f64,
}

impl Default for LimeOptions {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            kernel_width: 0.25,
            ridge: 1.0,
        }
    }
}

impl LimeOptions {
    pub fn validate(&self, words: usize) -> Result<()> {
        if self.n_samples < words.max(1) {
            return Err(Error::invalid(format!(
                "LIME needs at least as many samples as words ({} < {words})",
                self.n_samples
            )));
        }
        if !(self.kernel_width > 0.0) || !(self.ridge > 0.0) {
            return Err(Error::invalid(
                "LIME kernel width and ridge must be positive",
            ));
        }
        Ok(())
    }
}

/// Local surrogate scores: a weighted ridge regression of the target-class
/// confidence on which words were kept. Only eligible words are perturbed;
/// other positions score 0.
pub fn lime_scores<M: AttributionModel + ?Sized>(
    model: &M,
    sample: &Sample,
    ids: &[usize],
    class: usize,
    options: &LimeOptions,
    seed: u64,
) -> Result<Vec<f64>> {
    options.validate(sample.len())?;
    let features: Vec<usize> = sample
        .eligible_positions()
        .into_iter()
        .filter(|&p| p < ids.len())
        .collect();
    let m = features.len();
    let mut scores = vec![0.0; ids.len()];
    if m == 0 {
        return Ok(scores);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = options.n_samples;
    let cols = m + 1;
    let mut x = DMatrix::<f64>::zeros(n, cols);
    let mut y = DVector::<f64>::zeros(n);
    let mut w = DVector::<f64>::zeros(n);
    let pad = model.pad_id();
    let mut perturbed = ids.to_vec();
    for i in 0..n {
        let mut keep = vec![true; m];
        if i > 0 {
            let removed = rng.gen_range(1..=m);
            for j in index::sample(&mut rng, m, removed) {
                keep[j] = false;
            }
        }
        perturbed.copy_from_slice(ids);
        x[(i, 0)] = 1.0;
        let mut kept = 0usize;
        for (j, &on) in keep.iter().enumerate() {
            if on {
                x[(i, j + 1)] = 1.0;
                kept += 1;
            } else {
                perturbed[features[j]] = pad;
            }
        }
        y[i] = softmax(&model.logits(&perturbed)?)[class - 1];
        let distance = 1.0 - (kept as f64 / m as f64).sqrt();
        w[i] = (-(distance * distance) / (options.kernel_width * options.kernel_width)).exp();
    }

    let beta = weighted_ridge(&x, &y, &w, options.ridge)?;
    for (j, &p) in features.iter().enumerate() {
        scores[p] = beta[j + 1];
    }
    Ok(scores)
}

/// Solves `(XᵀWX + λD) β = XᵀWy` where `D` leaves the first (intercept) column
/// unpenalized.
pub(crate) fn weighted_ridge(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
    lambda: f64,
) -> Result<DVector<f64>> {
    let mut xw = x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let mut a = x.transpose() * &xw;
    for j in 1..a.ncols() {
        a[(j, j)] += lambda;
    }
    let rhs = xw.transpose() * y;
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(&rhs));
    }
    a.lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Tensor("ridge system is singular".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::text::{EmbeddedGraph, Split, Vocab, PAD};

    /// Two-class model whose class-2 confidence is `base + Σ weight[p]` over
    /// positions that are not PAD.
    struct AffineModel {
        vocab: Vocab,
        base: f64,
        weights: Vec<f64>,
    }

    impl AttributionModel for AffineModel {
        fn num_classes(&self) -> usize {
            2
        }
        fn encode(&self, sample: &Sample) -> Vec<usize> {
            sample
                .words
                .iter()
                .map(|w| self.vocab.id(&w.text))
                .collect()
        }
        fn embed(&self, ids: &[usize]) -> Tensor {
            Tensor::zeros(&[ids.len(), 1])
        }
        fn logits(&self, ids: &[usize]) -> Result<Vec<f64>> {
            let c: f64 = self.base
                + ids
                    .iter()
                    .zip(&self.weights)
                    .filter(|(&id, _)| id != PAD)
                    .map(|(_, w)| w)
                    .sum::<f64>();
            Ok(vec![0.0, (c / (1.0 - c)).ln()])
        }
        fn target_graph(&self, _: &[usize], _: usize) -> Result<EmbeddedGraph<'_>> {
            unimplemented!()
        }
        fn attention(&self, _: &[usize]) -> Result<Option<Vec<Vec<Tensor>>>> {
            Ok(None)
        }
    }

    fn sample() -> Sample {
        Sample::from_text("x", "a b , c d e", 2, Split::Eval).unwrap()
    }

    fn model(weights: Vec<f64>) -> AffineModel {
        AffineModel {
            vocab: Vocab::build(["a", "b", ",", "c", "d", "e"], 100),
            base: 0.2,
            weights,
        }
    }

    fn ranks(v: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0; v.len()];
        for (rank, i) in idx.into_iter().enumerate() {
            r[i] = rank;
        }
        r
    }

    #[test]
    fn affine_model_recovers_weight_order() {
        let weights = vec![0.05, 0.25, 0.0, -0.1, 0.15, 0.02];
        let m = model(weights.clone());
        let s = sample();
        let ids = m.encode(&s);
        let scores = lime_scores(&m, &s, &ids, 2, &LimeOptions::default(), 7).unwrap();
        assert_eq!(scores[2], 0.0);
        let eligible = [0, 1, 3, 4, 5];
        let got: Vec<f64> = eligible.iter().map(|&p| scores[p]).collect();
        let want: Vec<f64> = eligible.iter().map(|&p| weights[p]).collect();
        assert_eq!(ranks(&got), ranks(&want));
    }

    #[test]
    fn small_ridge_recovers_affine_weights() {
        let weights = vec![0.05, 0.25, 0.0, -0.1, 0.15, 0.02];
        let m = model(weights.clone());
        let s = sample();
        let ids = m.encode(&s);
        let opts = LimeOptions {
            ridge: 1e-9,
            ..Default::default()
        };
        let scores = lime_scores(&m, &s, &ids, 2, &opts, 1).unwrap();
        for p in [0, 1, 3, 4, 5] {
            assert!((scores[p] - weights[p]).abs() < 1e-6, "{p}: {}", scores[p]);
        }
    }

    #[test]
    fn constant_model_has_zero_coefficients() {
        let m = model(vec![0.0; 6]);
        let s = sample();
        let ids = m.encode(&s);
        let scores = lime_scores(&m, &s, &ids, 2, &LimeOptions::default(), 3).unwrap();
        assert!(scores.iter().all(|v| v.abs() < 1e-6), "{scores:?}");
    }

    #[test]
    fn deterministic_given_seed() {
        let m = model(vec![0.1, 0.2, 0.0, 0.05, 0.1, 0.3]);
        let s = sample();
        let ids = m.encode(&s);
        let opts = LimeOptions::default();
        assert_eq!(
            lime_scores(&m, &s, &ids, 2, &opts, 5).unwrap(),
            lime_scores(&m, &s, &ids, 2, &opts, 5).unwrap()
        );
    }

    #[test]
    fn too_few_samples_rejected() {
        let m = model(vec![0.0; 6]);
        let s = sample();
        let ids = m.encode(&s);
        let opts = LimeOptions {
            n_samples: 3,
            ..Default::default()
        };
        assert!(lime_scores(&m, &s, &ids, 2, &opts, 0).is_err());
    }
}
