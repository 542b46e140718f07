use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{Head, InputMode, TextClassifier};
use super::sample::{Sample, Split};
use super::vocab::Vocab;
use super::ClassifierConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Per-step gradient norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 8,
            learning_rate: 0.02,
            clip_norm: Some(5.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub train_samples: usize,
    pub validation_samples: usize,
}

/// Trains a classifier with plain SGD on the `train` split; `eval` samples
/// are used for validation accuracy only.
pub fn train(
    config: ClassifierConfig,
    corpus: &[Sample],
    options: TrainOptions,
) -> Result<(TextClassifier, TrainReport)> {
    config.validate()?;
    if let Some(bad) = corpus
        .iter()
        .find(|s| s.label == 0 || s.label > config.classes)
    {
        return Err(Error::data(format!(
            "sample {} has label {} outside 1..={}",
            bad.id, bad.label, config.classes
        )));
    }
    if !(options.learning_rate > 0.0) {
        return Err(Error::invalid("learning rate must be positive"));
    }
    let train_set: Vec<&Sample> = corpus.iter().filter(|s| s.split == Split::Train).collect();
    let validation: Vec<&Sample> = corpus.iter().filter(|s| s.split != Split::Train).collect();
    if train_set.is_empty() {
        return Err(Error::data("corpus has no training samples"));
    }

    let vocab = Vocab::build(
        train_set
            .iter()
            .flat_map(|s| s.words.iter().map(|w| w.text.as_str())),
        config.max_vocab,
    );
    let mut model = TextClassifier::init(config, vocab)?;
    let mut rng = ChaCha8Rng::seed_from_u64(model.config.seed ^ 0x7452_4149_4e00);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut epochs = Vec::with_capacity(options.epochs);

    for epoch in 0..options.epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        for &i in &order {
            total_loss += sgd_step(&mut model, train_set[i], &options)?;
        }
        epochs.push(EpochStats {
            epoch: epoch + 1,
            mean_loss: total_loss / train_set.len() as f64,
            train_accuracy: accuracy(&model, &train_set)?,
            validation_accuracy: if validation.is_empty() {
                None
            } else {
                Some(accuracy(&model, &validation)?)
            },
        });
    }
    let report = TrainReport {
        epochs,
        train_samples: train_set.len(),
        validation_samples: validation.len(),
    };
    Ok((model, report))
}

fn sgd_step(model: &mut TextClassifier, sample: &Sample, options: &TrainOptions) -> Result<f64> {
    let ids = model.encode_words(sample);
    let built = model.build_graph(&ids, InputMode::Gather, Head::Loss(sample.label))?;
    let loss_node = built.output.expect("loss head");
    let eval = built.graph.forward(&model.param_bindings(&built))?;
    let loss = eval.value(loss_node).data()[0];
    let mut grads = built.graph.backward(&eval, loss_node)?;

    let updates: Vec<(usize, crate::autodiff::Tensor)> = built
        .params
        .iter()
        .enumerate()
        .filter_map(|(i, id)| id.and_then(|id| grads.take(id)).map(|g| (i, g)))
        .collect();
    let norm = updates
        .iter()
        .flat_map(|(_, g)| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    let factor = match options.clip_norm {
        Some(cap) if norm > cap => cap / norm,
        _ => 1.0,
    };
    let step = options.learning_rate * factor;
    for (i, g) in updates {
        for (p, d) in model.params[i].value.data_mut().iter_mut().zip(g.data()) {
            *p -= step * d;
        }
    }
    Ok(loss)
}

pub(crate) fn accuracy(model: &TextClassifier, samples: &[&Sample]) -> Result<f64> {
    let mut correct = 0usize;
    for s in samples {
        if model.predict(s)? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}
