use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::one_hot_column;
use super::sample::Sample;
use super::vocab::Vocab;
use super::{AttributionModel, EmbeddedGraph};
use crate::autodiff::{GraphBuilder, Tensor};
use crate::error::{Error, Result};

/// Linear classifier over token embeddings, used as an attribution oracle:
/// every gradient-based method has a closed form on it.
///
/// With positional weights, `logits = concat(embeddings) · W + b` where `W`
/// has one `[d, C]` block per position. Without, every position shares the
/// same block (`logits = Σ_p e_p · W + b`).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    vocab: Vocab,
    embeddings: Tensor,
    weights: Tensor,
    bias: Vec<f64>,
    positional: bool,
    max_len: usize,
}

impl LinearClassifier {
    pub fn new(
        vocab: Vocab,
        embeddings: Tensor,
        weights: Tensor,
        bias: Vec<f64>,
        positional: bool,
    ) -> Result<Self> {
        let d = embeddings.cols();
        let classes = bias.len();
        if embeddings.rows() != vocab.len() {
            return Err(Error::invalid(
                "one embedding row per vocabulary entry required",
            ));
        }
        if weights.cols() != classes || !weights.rows().is_multiple_of(d) || weights.rank() != 2 {
            return Err(Error::invalid("weights must be [positions * d, classes]"));
        }
        let max_len = if positional {
            weights.rows() / d
        } else {
            usize::MAX
        };
        if !positional && weights.rows() != d {
            return Err(Error::invalid("position-free weights must be [d, classes]"));
        }
        Ok(Self {
            vocab,
            embeddings,
            weights,
            bias,
            positional,
            max_len,
        })
    }

    /// Random model over `words`; the PAD embedding is zero.
    pub fn random<'a>(
        words: impl IntoIterator<Item = &'a str>,
        dim: usize,
        classes: usize,
        max_len: usize,
        positional: bool,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = Vocab::build(words, usize::MAX);
        let mut emb: Vec<f64> = (0..vocab.len() * dim)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        emb[..dim].iter_mut().for_each(|v| *v = 0.0);
        let rows = if positional { max_len * dim } else { dim };
        let weights = (0..rows * classes)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let bias = (0..classes).map(|_| rng.gen_range(-0.1..0.1)).collect();
        Self::new(
            vocab.clone(),
            Tensor::from_parts(vec![vocab.len(), dim], emb),
            Tensor::from_parts(vec![rows, classes], weights),
            bias,
            positional,
        )
        .expect("shapes are consistent by construction")
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    /// Weight vector mapping the embedding at `position` to `logit[class]`.
    pub fn weight_block(&self, position: usize, class: usize) -> Vec<f64> {
        let d = self.dim();
        let base = if self.positional { position * d } else { 0 };
        (0..d)
            .map(|k| self.weights.at(base + k, class - 1))
            .collect()
    }

    fn weight_slice(&self, t: usize) -> Tensor {
        if !self.positional {
            return self.weights.clone();
        }
        let d = self.dim();
        let c = self.bias.len();
        Tensor::from_parts(vec![t * d, c], self.weights.data()[..t * d * c].to_vec())
    }
}

impl AttributionModel for LinearClassifier {
    fn num_classes(&self) -> usize {
        self.bias.len()
    }

    fn encode(&self, sample: &Sample) -> Vec<usize> {
        sample
            .words
            .iter()
            .take(self.max_len)
            .map(|w| self.vocab.id(&w.text))
            .collect()
    }

    fn embed(&self, ids: &[usize]) -> Tensor {
        let d = self.dim();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            data.extend_from_slice(self.embeddings.row(id));
        }
        Tensor::from_parts(vec![ids.len(), d], data)
    }

    fn logits(&self, ids: &[usize]) -> Result<Vec<f64>> {
        let e = self.embed(ids);
        let w = self.weight_slice(ids.len());
        let out = if self.positional {
            Tensor::from_parts(vec![1, e.len()], e.into_data()).matmul(&w)
        } else {
            Tensor::filled(&[1, ids.len()], 1.0).matmul(&e).matmul(&w)
        };
        Ok(out
            .data()
            .iter()
            .zip(&self.bias)
            .map(|(a, b)| a + b)
            .collect())
    }

    fn target_graph(&self, ids: &[usize], class: usize) -> Result<EmbeddedGraph<'_>> {
        let t = ids.len();
        if t == 0 || t > self.max_len {
            return Err(Error::invalid(format!("input length {t} unsupported")));
        }
        let d = self.dim();
        let mut b = GraphBuilder::new();
        let input = b.leaf("input_embeddings");
        let w = b.constant(self.weight_slice(t));
        let features = if self.positional {
            b.reshape(input, vec![1, t * d])
        } else {
            let ones = b.constant(Tensor::filled(&[1, t], 1.0));
            b.matmul(ones, input)
        };
        let logits = b.matmul(features, w);
        let bias = b.constant(Tensor::from_parts(
            vec![1, self.bias.len()],
            self.bias.clone(),
        ));
        let logits = b.add(logits, bias);
        let sel = b.constant(one_hot_column(self.bias.len(), class)?);
        let output = b.matmul(logits, sel);
        Ok(EmbeddedGraph {
            graph: b.build(),
            input,
            output,
            fixed: Vec::new(),
        })
    }

    fn attention(&self, _ids: &[usize]) -> Result<Option<Vec<Vec<Tensor>>>> {
        Ok(None)
    }
}
