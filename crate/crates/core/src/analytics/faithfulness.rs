use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::autodiff::softmax;
use crate::error::{Error, Result};
use crate::saliency::{top_k_positions, Explanation, Method};
use crate::text::{argmax_class, AttributionModel, Sample};

/// How removed words are taken out of the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Removal {
    /// Replace by PAD, keeping positions.
    #[default]
    Pad,
    /// Drop the tokens.
    Delete,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Faithfulness {
    pub target_class: usize,
    pub full_confidence: f64,
    /// Confidence drop when only the top-k words are kept.
    pub sufficiency: f64,
    /// Confidence drop when the top-k words are removed.
    pub comprehensiveness: f64,
}

/// Sufficiency and comprehensiveness of one explanation at `k`, from three
/// forward passes. Only eligible words are ever removed; punctuation and
/// special tokens stay in both perturbed inputs. The target is the class
/// predicted on the full input.
pub fn faithfulness<M: AttributionModel + ?Sized>(
    model: &M,
    sample: &Sample,
    scores: &[f64],
    k: usize,
    removal: Removal,
    rank_by_abs: bool,
) -> Result<Faithfulness> {
    if scores.len() != sample.len() {
        return Err(Error::data(format!(
            "{} scores for {} words in sample {}",
            scores.len(),
            sample.len(),
            sample.id
        )));
    }
    let ids = model.encode(sample);
    if ids.is_empty() {
        return Err(Error::invalid(format!("sample {} is empty", sample.id)));
    }
    let full = model.logits(&ids)?;
    let target = argmax_class(&full);
    let conf = |ids: &[usize]| -> Result<f64> { Ok(softmax(&model.logits(ids)?)[target - 1]) };
    let full_conf = softmax(&full)[target - 1];

    let eligible: Vec<usize> = sample
        .eligible_positions()
        .into_iter()
        .filter(|&p| p < ids.len())
        .collect();
    let mut top = vec![false; ids.len()];
    for p in top_k_positions(scores, &eligible, k, rank_by_abs) {
        top[p] = true;
    }
    let mut is_eligible = vec![false; ids.len()];
    for &p in &eligible {
        is_eligible[p] = true;
    }
    let perturb = |remove: &dyn Fn(usize) -> bool| -> Vec<usize> {
        let pad = model.pad_id();
        let out: Vec<usize> = match removal {
            Removal::Pad => (0..ids.len())
                .map(|p| if remove(p) { pad } else { ids[p] })
                .collect(),
            Removal::Delete => (0..ids.len())
                .filter(|&p| !remove(p))
                .map(|p| ids[p])
                .collect(),
        };
        if out.is_empty() {
            vec![pad]
        } else {
            out
        }
    };
    let keep_only = perturb(&|p| is_eligible[p] && !top[p]);
    let drop_top = perturb(&|p| top[p]);
    Ok(Faithfulness {
        target_class: target,
        full_confidence: full_conf,
        sufficiency: full_conf - conf(&keep_only)?,
        comprehensiveness: full_conf - conf(&drop_top)?,
    })
}

/// Mean sufficiency and comprehensiveness per method and k.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessTable {
    pub methods: Vec<Method>,
    pub ks: Vec<usize>,
    pub removal: Removal,
    pub samples: usize,
    /// `sufficiency[j][k]`.
    pub sufficiency: Vec<Vec<f64>>,
    pub comprehensiveness: Vec<Vec<f64>>,
}

pub fn faithfulness_table<M: AttributionModel + ?Sized>(
    model: &M,
    samples: &[Sample],
    explanations: &[Explanation],
    methods: &[Method],
    ks: &[usize],
    removal: Removal,
    rank_by_abs: bool,
) -> Result<FaithfulnessTable> {
    if samples.is_empty() || methods.is_empty() || ks.is_empty() {
        return Err(Error::invalid(
            "faithfulness table needs samples, methods, and k values",
        ));
    }
    let index: HashMap<(&str, Method), &Explanation> = explanations
        .iter()
        .map(|e| ((e.sample_id.as_str(), e.method), e))
        .collect();
    let missing: Vec<String> = samples
        .iter()
        .flat_map(|s| methods.iter().map(move |&m| (s, m)))
        .filter(|(s, m)| !index.contains_key(&(s.id.as_str(), *m)))
        .map(|(s, m)| format!("{}/{}", s.id, m))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingExplanations(missing.join(", ")));
    }
    let n = samples.len() as f64;
    let mut suff = vec![vec![0.0; ks.len()]; methods.len()];
    let mut comp = vec![vec![0.0; ks.len()]; methods.len()];
    for s in samples {
        for (j, &m) in methods.iter().enumerate() {
            let e = index[&(s.id.as_str(), m)];
            for (kk, &k) in ks.iter().enumerate() {
                let f = faithfulness(model, s, &e.scores, k, removal, rank_by_abs)?;
                suff[j][kk] += f.sufficiency / n;
                comp[j][kk] += f.comprehensiveness / n;
            }
        }
    }
    Ok(FaithfulnessTable {
        methods: methods.to_vec(),
        ks: ks.to_vec(),
        removal,
        samples: samples.len(),
        sufficiency: suff,
        comprehensiveness: comp,
    })
}

impl FaithfulnessTable {
    /// Two blocks (sufficiency, then comprehensiveness), one row per method.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (title, values) in [
            ("Sufficiency (lower is better)", &self.sufficiency),
            (
                "Comprehensiveness (higher is better)",
                &self.comprehensiveness,
            ),
        ] {
            let _ = writeln!(out, "{title}");
            let _ = write!(out, "{:<20}", "Method");
            for k in &self.ks {
                let _ = write!(out, " {:>8}", format!("k={k}"));
            }
            out.push('\n');
            for (j, m) in self.methods.iter().enumerate() {
                let _ = write!(out, "{:<20}", m.display_name());
                for v in &values[j] {
                    let _ = write!(out, " {v:>8.4}");
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}
