use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::argmax_class;
use super::sample::Sample;
use super::AttributionModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    Correct,
    Misclassified,
}

/// Randomly picks `n` samples the model gets right (or wrong). With
/// `balanced`, exactly `n / C` samples are taken from each true class.
/// The result keeps corpus order.
pub fn select_eval_samples<M: AttributionModel + ?Sized>(
    model: &M,
    corpus: &[Sample],
    n: usize,
    mode: SelectionMode,
    balanced: bool,
    seed: u64,
) -> Result<Vec<Sample>> {
    let classes = model.num_classes();
    if balanced && !n.is_multiple_of(classes) {
        return Err(Error::invalid(format!(
            "balanced selection of {n} samples is impossible over {classes} classes"
        )));
    }
    let mut qualifying: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, s) in corpus.iter().enumerate() {
        let ids = model.encode(s);
        let predicted = argmax_class(&model.logits(&ids)?);
        let correct = predicted == s.label;
        if correct == (mode == SelectionMode::Correct) && (1..=classes).contains(&s.label) {
            qualifying[s.label - 1].push(i);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = if balanced {
        let per_class = n / classes;
        let short: Vec<String> = qualifying
            .iter()
            .enumerate()
            .filter(|(_, q)| q.len() < per_class)
            .map(|(c, q)| format!("class {} has {} of {per_class}", c + 1, q.len()))
            .collect();
        if !short.is_empty() {
            return Err(Error::InsufficientSamples(short.join(", ")));
        }
        qualifying
            .iter_mut()
            .flat_map(|q| {
                q.shuffle(&mut rng);
                q[..per_class].to_vec()
            })
            .collect::<Vec<_>>()
    } else {
        let mut all: Vec<usize> = qualifying.concat();
        all.sort_unstable();
        if all.len() < n {
            return Err(Error::InsufficientSamples(format!(
                "{} qualifying samples, {n} requested",
                all.len()
            )));
        }
        all.shuffle(&mut rng);
        all.truncate(n);
        all
    };
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| corpus[i].clone()).collect())
}
