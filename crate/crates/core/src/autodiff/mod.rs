//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] is recorded once with a [`GraphBuilder`] and can then be
//! evaluated any number of times with different leaf bindings. Two backward
//! modes are provided: the true gradient ([`Graph::backward`]) and the
//! DeepLIFT rescale rule ([`Graph::backward_rescale`]), which replaces each
//! nonlinearity's local derivative with the difference quotient between an
//! actual and a reference evaluation.

mod graph;
mod tensor;

pub use graph::{
    Bindings, Evaluation, Gradients, Graph, GraphBuilder, NodeId, Op, RescaleOptions,
    SoftmaxRescale,
};
pub use tensor::{softmax, Tensor};
