use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tasks::HIDDEN_MARKER;

/// Behaviour of the simulated annotator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub classes: usize,
    /// Keyword → 1-based class.
    pub keyword_class: HashMap<String, usize>,
    /// Probability of answering with a uniformly random class.
    pub noise: f64,
    /// Answer "I don't know" (0) when no keyword decides the sample.
    pub dont_know_if_no_keyword: bool,
}

impl OracleConfig {
    pub fn new(classes: usize, keyword_class: HashMap<String, usize>) -> Self {
        Self {
            classes,
            keyword_class,
            noise: 0.0,
            dont_know_if_no_keyword: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::invalid(format!(
                "oracle noise {} outside [0, 1]",
                self.noise
            )));
        }
        if self.classes < 2 {
            return Err(Error::invalid("oracle needs at least two classes"));
        }
        Ok(())
    }
}

/// Labels a rendered task the way a keyword-reading worker would: the class
/// holding the most shown keywords wins. No keyword (or a tie between
/// classes) counts as undecided.
pub fn simulate_worker(rendered: &str, oracle: &OracleConfig, rng: &mut impl Rng) -> usize {
    if oracle.noise > 0.0 && rng.gen_bool(oracle.noise) {
        return rng.gen_range(1..=oracle.classes);
    }
    let mut counts = vec![0usize; oracle.classes + 1];
    for token in rendered.split_whitespace().filter(|t| *t != HIDDEN_MARKER) {
        if let Some(&c) = oracle.keyword_class.get(token) {
            counts[c] += 1;
        }
    }
    let best = counts.iter().skip(1).copied().max().unwrap_or(0);
    let leaders: Vec<usize> = (1..=oracle.classes)
        .filter(|&c| counts[c] == best)
        .collect();
    if best > 0 && leaders.len() == 1 {
        leaders[0]
    } else if oracle.dont_know_if_no_keyword {
        0
    } else {
        rng.gen_range(1..=oracle.classes)
    }
}
