use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::aggregation::AggregateMatrix;
use crate::error::{Error, Result};
use crate::saliency::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipCategory {
    /// Recovered at some k but lost at a larger k.
    Flipped,
    /// Recovered at every k.
    AlwaysCorrect,
    /// Everything else, never-recovered samples included.
    Aided,
}

/// Classifies an outcome sequence ordered by ascending k.
pub fn classify(outcomes: &[u8]) -> FlipCategory {
    let mut seen_correct = false;
    for &a in outcomes {
        if a == 1 {
            seen_correct = true;
        } else if seen_correct {
            return FlipCategory::Flipped;
        }
    }
    if !outcomes.is_empty() && outcomes.iter().all(|&a| a == 1) {
        FlipCategory::AlwaysCorrect
    } else {
        FlipCategory::Aided
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodFlipCounts {
    pub method: Method,
    pub flipped: usize,
    pub always_correct: usize,
    pub aided: usize,
    /// Part of `aided` that was never recovered at any k.
    pub never_correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipReport {
    pub samples: Vec<String>,
    pub methods: Vec<Method>,
    pub ks: Vec<usize>,
    /// `categories[i][j]`.
    pub categories: Vec<Vec<FlipCategory>>,
    pub counts: Vec<MethodFlipCounts>,
    /// Number of methods under which each sample flipped.
    pub flips_per_sample: Vec<usize>,
}

pub fn detect_flips(a: &AggregateMatrix) -> Result<FlipReport> {
    if a.ks.len() < 2 {
        return Err(Error::invalid("flip detection needs at least two k values"));
    }
    let (n, jn, kn) = (a.samples.len(), a.methods.len(), a.ks.len());
    let mut categories = vec![vec![FlipCategory::Aided; jn]; n];
    let mut counts: Vec<MethodFlipCounts> = a
        .methods
        .iter()
        .map(|&method| MethodFlipCounts {
            method,
            flipped: 0,
            always_correct: 0,
            aided: 0,
            never_correct: 0,
        })
        .collect();
    let mut flips_per_sample = vec![0; n];
    for i in 0..n {
        for j in 0..jn {
            let seq: Vec<u8> = (0..kn).map(|k| a.get(i, j, k)).collect();
            let c = classify(&seq);
            categories[i][j] = c;
            match c {
                FlipCategory::Flipped => {
                    counts[j].flipped += 1;
                    flips_per_sample[i] += 1;
                }
                FlipCategory::AlwaysCorrect => counts[j].always_correct += 1,
                FlipCategory::Aided => {
                    counts[j].aided += 1;
                    if seq.iter().all(|&x| x == 0) {
                        counts[j].never_correct += 1;
                    }
                }
            }
        }
    }
    Ok(FlipReport {
        samples: a.samples.clone(),
        methods: a.methods.clone(),
        ks: a.ks.clone(),
        categories,
        counts,
        flips_per_sample,
    })
}

impl FlipReport {
    /// Samples binned by the number of methods they flipped under (0..=J).
    pub fn histogram(&self) -> Vec<usize> {
        let mut bins = vec![0; self.methods.len() + 1];
        for &f in &self.flips_per_sample {
            bins[f] += 1;
        }
        bins
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("methods_flipped,samples\n");
        for (b, c) in self.histogram().iter().enumerate() {
            let _ = writeln!(out, "{b},{c}");
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{:<20} {:>8} {:>8} {:>8} {:>14}\n",
            "Method", "Flip", "Always", "Aids", "(never right)"
        );
        for c in &self.counts {
            let _ = writeln!(
                out,
                "{:<20} {:>8} {:>8} {:>8} {:>14}",
                c.method.display_name(),
                c.flipped,
                c.always_correct,
                c.aided,
                c.never_correct
            );
        }
        out
    }
}
