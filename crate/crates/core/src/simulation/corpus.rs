use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{Sample, Split, Word};

/// Parameters of a synthetic planted-keyword corpus.
///
/// Every sample is filler text with a few keywords of its own class planted
/// at random positions. Optional "misleading" keywords of another class can
/// be planted too (always fewer than the sample's own keywords).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub classes: usize,
    pub keywords_per_class: usize,
    /// Explicit keyword sets, one per class. Generated when empty.
    pub keywords: Vec<Vec<String>>,
    pub filler_vocab: usize,
    /// Explicit filler words. Generated when empty.
    pub filler: Vec<String>,
    /// Inclusive range of words per sample (keywords included).
    pub words_per_sample: (usize, usize),
    pub keywords_per_sample: (usize, usize),
    pub misleading_per_sample: (usize, usize),
    /// Probability that a punctuation token follows any word.
    pub punctuation_rate: f64,
    pub samples: usize,
    pub eval_fraction: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            classes: 2,
            keywords_per_class: 8,
            keywords: Vec::new(),
            filler_vocab: 200,
            filler: Vec::new(),
            words_per_sample: (30, 50),
            keywords_per_sample: (2, 3),
            misleading_per_sample: (0, 0),
            punctuation_rate: 0.05,
            samples: 600,
            eval_fraction: 0.5,
            seed: 0,
        }
    }
}

const PUNCTUATION: [&str; 4] = [",", ".", "!", ";"];

impl CorpusSpec {
    pub fn keyword_sets(&self) -> Vec<Vec<String>> {
        if !self.keywords.is_empty() {
            return self.keywords.clone();
        }
        (1..=self.classes)
            .map(|c| {
                (0..self.keywords_per_class)
                    .map(|i| format!("kw{c}x{i}"))
                    .collect()
            })
            .collect()
    }

    pub fn filler_words(&self) -> Vec<String> {
        if !self.filler.is_empty() {
            return self.filler.clone();
        }
        (0..self.filler_vocab).map(|i| format!("w{i}")).collect()
    }

    /// Keyword → 1-based class.
    pub fn keyword_classes(&self) -> HashMap<String, usize> {
        self.keyword_sets()
            .into_iter()
            .enumerate()
            .flat_map(|(c, set)| set.into_iter().map(move |w| (w, c + 1)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::invalid(format!("corpus spec: {m}")));
        if self.classes < 2 {
            return fail("at least two classes required".into());
        }
        let sets = self.keyword_sets();
        if sets.len() != self.classes {
            return fail(format!(
                "{} keyword sets for {} classes",
                sets.len(),
                self.classes
            ));
        }
        if sets.iter().any(Vec::is_empty) {
            return fail("every class needs at least one keyword".into());
        }
        let mut seen = HashSet::new();
        for w in sets.iter().flatten() {
            if !seen.insert(w.as_str()) {
                return fail(format!("keyword `{w}` appears in more than one place"));
            }
        }
        let filler = self.filler_words();
        if filler.is_empty() {
            return fail("filler vocabulary is empty".into());
        }
        if let Some(w) = filler.iter().find(|w| seen.contains(w.as_str())) {
            return fail(format!("filler word `{w}` is also a keyword"));
        }
        let (lo, hi) = self.keywords_per_sample;
        let (mlo, mhi) = self.misleading_per_sample;
        let (wlo, whi) = self.words_per_sample;
        if lo == 0 || lo > hi {
            return fail("keywords_per_sample must be a non-empty range starting at >= 1".into());
        }
        if mlo > mhi || mhi >= lo {
            return fail("misleading_per_sample must stay below keywords_per_sample".into());
        }
        if wlo > whi || wlo < hi + mhi {
            return fail("words_per_sample must fit all planted keywords".into());
        }
        if !(0.0..=1.0).contains(&self.punctuation_rate)
            || !(0.0..1.0).contains(&self.eval_fraction)
        {
            return fail("rates must lie in [0, 1)".into());
        }
        if self.samples == 0 {
            return fail("samples must be positive".into());
        }
        Ok(())
    }
}

/// Generates the corpus. Labels cycle through the classes so every class is
/// equally represented; a random `eval_fraction` of samples is marked `eval`.
pub fn gen_corpus(spec: &CorpusSpec) -> Result<Vec<Sample>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let keywords = spec.keyword_sets();
    let filler = spec.filler_words();
    let mut out = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let label = i % spec.classes + 1;
        let n_words = rng.gen_range(spec.words_per_sample.0..=spec.words_per_sample.1);
        let n_kw = rng.gen_range(spec.keywords_per_sample.0..=spec.keywords_per_sample.1);
        let n_mis = rng
            .gen_range(spec.misleading_per_sample.0..=spec.misleading_per_sample.1)
            .min(n_kw - 1);

        let mut words: Vec<String> = (0..n_words)
            .map(|_| filler.choose(&mut rng).expect("non-empty").clone())
            .collect();
        let mut slots: Vec<usize> = (0..n_words).collect();
        slots.shuffle(&mut rng);
        let mut slots = slots.into_iter();
        for _ in 0..n_kw {
            let w = keywords[label - 1].choose(&mut rng).expect("non-empty");
            words[slots.next().expect("range validated")] = w.clone();
        }
        for _ in 0..n_mis {
            let other = loop {
                let c = rng.gen_range(1..=spec.classes);
                if c != label {
                    break c;
                }
            };
            let w = keywords[other - 1].choose(&mut rng).expect("non-empty");
            words[slots.next().expect("range validated")] = w.clone();
        }

        let mut tokens = Vec::with_capacity(n_words + 4);
        for w in words {
            tokens.push(Word::new(w));
            if rng.gen_bool(spec.punctuation_rate) {
                tokens.push(Word::new(*PUNCTUATION.choose(&mut rng).expect("non-empty")));
            }
        }
        let split = if rng.gen_bool(spec.eval_fraction) {
            Split::Eval
        } else {
            Split::Train
        };
        out.push(Sample {
            id: format!("s{i:05}"),
            words: tokens,
            label,
            split,
        });
    }
    Ok(out)
}
