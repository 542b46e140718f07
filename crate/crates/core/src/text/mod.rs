//! Tokenizer, vocabulary, corpus I/O, and the small self-attention classifier.

mod linear;
mod model;
mod sample;
mod select;
mod tokenize;
mod train;
mod vocab;

pub use linear::LinearClassifier;
pub use model::{argmax_class, ClassifierConfig, ModelOutput, TextClassifier, CHECKPOINT_VERSION};
pub use sample::{read_corpus, write_corpus, Sample, Split};
pub use select::{select_eval_samples, SelectionMode};
pub use tokenize::{tokenize, Word};
pub use train::{train, EpochStats, TrainOptions, TrainReport};
pub use vocab::{Vocab, PAD, UNK};

use crate::autodiff::{Bindings, Graph, NodeId, Tensor};
use crate::error::Result;

/// What saliency methods need from a classifier.
///
/// Class indices are 1-based throughout.
pub trait AttributionModel {
    fn num_classes(&self) -> usize;

    /// Token ids for the sample, truncated to the model's maximum length.
    fn encode(&self, sample: &Sample) -> Vec<usize>;

    /// Token embeddings `[T, d]` for `ids`.
    fn embed(&self, ids: &[usize]) -> Tensor;

    fn logits(&self, ids: &[usize]) -> Result<Vec<f64>>;

    /// Graph whose scalar output is `logit[class]` as a function of the token
    /// embeddings of `ids` (the mask and pooling still follow `ids`).
    fn target_graph(&self, ids: &[usize], class: usize) -> Result<EmbeddedGraph<'_>>;

    /// Attention weights `[layer][head]` of shape `[T, T]`, if the model has any.
    fn attention(&self, ids: &[usize]) -> Result<Option<Vec<Vec<Tensor>>>>;

    fn pad_id(&self) -> usize {
        PAD
    }
}

/// A differentiable view of a model with token embeddings as the only free leaf.
pub struct EmbeddedGraph<'m> {
    pub graph: Graph,
    pub input: NodeId,
    pub output: NodeId,
    pub fixed: Vec<(NodeId, &'m Tensor)>,
}

impl<'m> EmbeddedGraph<'m> {
    pub fn bindings<'a>(&'a self, input: &'a Tensor) -> Bindings<'a> {
        let mut b: Bindings<'a> = self.fixed.iter().map(|&(id, t)| (id, t)).collect();
        b.insert(self.input, input);
        b
    }

    pub fn value(&self, input: &Tensor) -> Result<f64> {
        let eval = self.graph.forward(&self.bindings(input))?;
        Ok(eval.value(self.output).data()[0])
    }

    /// Output value and its gradient with respect to the embeddings.
    pub fn value_and_grad(&self, input: &Tensor) -> Result<(f64, Tensor)> {
        let eval = self.graph.forward(&self.bindings(input))?;
        let mut grads = self.graph.backward(&eval, self.output)?;
        let grad = grads.take(self.input).expect("input is a leaf");
        Ok((eval.value(self.output).data()[0], grad))
    }
}
