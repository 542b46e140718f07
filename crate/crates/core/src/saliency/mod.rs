//! The seven saliency methods, the random baseline, and top-k selection.
//!
//! Every method maps `(model, sample, target class)` to one real score per
//! word position of the sample. Punctuation positions are scored like any
//! other token by the model-based methods, but never ranked; positions cut
//! off by the model's maximum length score 0.

mod attention;
mod gradient;
mod lime;
mod topk;

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use attention::{attention_scores, AttentionDirection};
pub use gradient::{
    deeplift_scores, input_x_grad_scores, integrated_gradient_scores, vanilla_gradient_scores,
    IntegratedGradientResult,
};
pub use lime::{lime_scores, LimeOptions};
pub use topk::{top_k_positions, top_k_words, TopK};

use crate::autodiff::{softmax, RescaleOptions};
use crate::error::{Error, Result};
use crate::seed::derive_seed;
use crate::text::{argmax_class, AttributionModel, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    AllAttention,
    LastAttention,
    VanillaGradient,
    InputXGrad,
    IntegratedGradient,
    #[serde(rename = "deeplift")]
    DeepLift,
    Lime,
    Random,
    /// Ideal method for simulations: scores the sample's planted keywords.
    KeywordOracle,
}

impl Method {
    /// The seven methods under evaluation plus the random baseline, in the
    /// order reports list them.
    pub const STANDARD: [Method; 8] = [
        Method::Random,
        Method::AllAttention,
        Method::LastAttention,
        Method::VanillaGradient,
        Method::InputXGrad,
        Method::IntegratedGradient,
        Method::DeepLift,
        Method::Lime,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::AllAttention => "all_attention",
            Method::LastAttention => "last_attention",
            Method::VanillaGradient => "vanilla_gradient",
            Method::InputXGrad => "input_x_grad",
            Method::IntegratedGradient => "integrated_gradient",
            Method::DeepLift => "deeplift",
            Method::Lime => "lime",
            Method::Random => "random",
            Method::KeywordOracle => "keyword_oracle",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            Method::AllAttention => "All Attention",
            Method::LastAttention => "Last Attention",
            Method::VanillaGradient => "Vanilla Gradient",
            Method::InputXGrad => "InputXGrad",
            Method::IntegratedGradient => "Integrated Gradient",
            Method::DeepLift => "DeepLIFT",
            Method::Lime => "LIME",
            Method::Random => "Random",
            Method::KeywordOracle => "Keyword Oracle",
        }
    }

    pub fn is_class_specific(self) -> bool {
        !matches!(
            self,
            Method::AllAttention | Method::LastAttention | Method::Random
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let normalized = s.trim().to_lowercase().replace(['-', ' '], "_");
        Method::STANDARD
            .into_iter()
            .chain([Method::KeywordOracle])
            .find(|m| m.as_str() == normalized)
            .ok_or_else(|| Error::invalid(format!("unknown saliency method `{s}`")))
    }
}

/// Which class the explanation targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetClass {
    #[default]
    Predicted,
    GroundTruth,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// All-zero token embeddings.
    #[default]
    Zero,
    /// The PAD token's embedding at every position.
    Pad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainOptions {
    pub target: TargetClass,
    pub ig_steps: usize,
    pub baseline: Baseline,
    pub lime: LimeOptions,
    pub attention_direction: AttentionDirection,
    #[serde(skip)]
    pub rescale: RescaleOptions,
    pub seed: u64,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        Self {
            target: TargetClass::Predicted,
            ig_steps: 50,
            baseline: Baseline::Zero,
            lime: LimeOptions::default(),
            attention_direction: AttentionDirection::Received,
            rescale: RescaleOptions::default(),
            seed: 0,
        }
    }
}

/// Per-word scores of one method on one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub sample_id: String,
    pub method: Method,
    pub target_class: usize,
    pub scores: Vec<f64>,
    pub predicted_class: usize,
    pub confidence: f64,
    pub params: serde_json::Value,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completeness_residual: Option<f64>,
}

impl Explanation {
    pub fn validate_against(&self, sample: &Sample) -> Result<()> {
        if self.scores.len() != sample.len() {
            return Err(Error::data(format!(
                "explanation {}/{} has {} scores for {} words",
                self.sample_id,
                self.method,
                self.scores.len(),
                sample.len()
            )));
        }
        if self.scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::data(format!(
                "explanation {}/{} has non-finite scores",
                self.sample_id, self.method
            )));
        }
        Ok(())
    }
}

/// Model prediction summary reused by every method.
struct Prediction {
    ids: Vec<usize>,
    predicted: usize,
    confidence: f64,
}

fn predict<M: AttributionModel + ?Sized>(model: &M, sample: &Sample) -> Result<Prediction> {
    let ids = model.encode(sample);
    if ids.is_empty() {
        return Err(Error::invalid(format!("sample {} is empty", sample.id)));
    }
    let logits = model.logits(&ids)?;
    let predicted = argmax_class(&logits);
    let confidence = softmax(&logits)[predicted - 1];
    Ok(Prediction {
        ids,
        predicted,
        confidence,
    })
}

fn resolve_target(
    target: TargetClass,
    sample: &Sample,
    predicted: usize,
    classes: usize,
) -> Result<usize> {
    let class = match target {
        TargetClass::Predicted => predicted,
        TargetClass::GroundTruth => sample.label,
        TargetClass::Fixed(c) => c,
    };
    if class == 0 || class > classes {
        return Err(Error::invalid(format!(
            "target class {class} outside 1..={classes}"
        )));
    }
    Ok(class)
}

/// Pads per-token scores out to the sample's full word count.
fn full_length(mut scores: Vec<f64>, words: usize) -> Vec<f64> {
    scores.resize(words, 0.0);
    scores
}

/// Runs one saliency method.
pub fn explain<M: AttributionModel + ?Sized>(
    model: &M,
    sample: &Sample,
    method: Method,
    options: &ExplainOptions,
) -> Result<Explanation> {
    let pred = predict(model, sample)?;
    let target = resolve_target(options.target, sample, pred.predicted, model.num_classes())?;
    let mut residual = None;
    let mut seed = None;
    let (scores, params) = match method {
        Method::AllAttention | Method::LastAttention => {
            let attn = model.attention(&pred.ids)?.ok_or_else(|| {
                Error::invalid(format!("{method} needs a model with attention layers"))
            })?;
            let layers = if method == Method::AllAttention {
                0..attn.len()
            } else {
                attn.len() - 1..attn.len()
            };
            let scores = attention_scores(&attn[layers], options.attention_direction);
            (scores, json!({ "direction": options.attention_direction }))
        }
        Method::VanillaGradient => (
            vanilla_gradient_scores(model, &pred.ids, target)?,
            json!({ "reduction": "l2" }),
        ),
        Method::InputXGrad => (
            input_x_grad_scores(model, &pred.ids, target)?,
            json!({ "reduction": "sum" }),
        ),
        Method::IntegratedGradient => {
            let r = integrated_gradient_scores(
                model,
                &pred.ids,
                target,
                options.ig_steps,
                options.baseline,
            )?;
            residual = Some(r.completeness_residual);
            (
                r.scores,
                json!({ "steps": options.ig_steps, "baseline": options.baseline }),
            )
        }
        Method::DeepLift => (
            deeplift_scores(model, &pred.ids, target, options.baseline, options.rescale)?,
            json!({
                "baseline": options.baseline,
                "softmax_rule": format!("{:?}", options.rescale.softmax).to_lowercase(),
                "threshold": options.rescale.threshold,
            }),
        ),
        Method::Lime => {
            let s = derive_seed(options.seed, &format!("lime/{}", sample.id));
            seed = Some(options.seed);
            (
                lime_scores(model, sample, &pred.ids, target, &options.lime, s)?,
                serde_json::to_value(options.lime)?,
            )
        }
        Method::Random => {
            seed = Some(options.seed);
            (random_scores(sample, options.seed), json!({}))
        }
        Method::KeywordOracle => {
            return Err(Error::invalid(
                "keyword_oracle explanations come from the simulation module",
            ))
        }
    };
    let explanation = Explanation {
        sample_id: sample.id.clone(),
        method,
        target_class: target,
        scores: full_length(scores, sample.len()),
        predicted_class: pred.predicted,
        confidence: pred.confidence,
        params,
        seed,
        completeness_residual: residual,
    };
    explanation.validate_against(sample)?;
    Ok(explanation)
}

/// I.i.d. uniform(0, 1) scores seeded by `(sample id, seed)`.
pub fn random_scores(sample: &Sample, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("random/{}", sample.id)));
    (0..sample.len()).map(|_| rng.gen::<f64>()).collect()
}

/// Random-baseline explanation; needs no model.
pub fn explain_random(sample: &Sample, seed: u64) -> Explanation {
    Explanation {
        sample_id: sample.id.clone(),
        method: Method::Random,
        target_class: sample.label,
        scores: random_scores(sample, seed),
        predicted_class: sample.label,
        confidence: 0.0,
        params: json!({}),
        seed: Some(seed),
        completeness_residual: None,
    }
}

pub fn read_explanations(reader: impl BufRead) -> Result<Vec<Explanation>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::data(format!("explanation line {}: {e}", n + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_explanations(mut writer: impl Write, explanations: &[Explanation]) -> Result<()> {
    for e in explanations {
        serde_json::to_writer(&mut writer, e)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::Split;

    #[test]
    fn method_names_round_trip() {
        for m in Method::STANDARD {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.as_str()));
        }
        assert_eq!(
            "Integrated-Gradient".parse::<Method>().unwrap(),
            Method::IntegratedGradient
        );
        assert!("shap".parse::<Method>().is_err());
    }

    #[test]
    fn random_scores_are_seeded() {
        let s = Sample::from_text("a", "one two three four", 1, Split::Eval).unwrap();
        assert_eq!(random_scores(&s, 3), random_scores(&s, 3));
        assert_ne!(random_scores(&s, 3), random_scores(&s, 4));
        assert!(random_scores(&s, 3).iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn random_scores_have_mean_one_half() {
        let text = vec!["w"; 100].join(" ");
        let mut total = 0.0;
        let mut n = 0;
        for i in 0..100 {
            let s = Sample::from_text(format!("s{i}"), &text, 1, Split::Eval).unwrap();
            let scores = random_scores(&s, 11);
            total += scores.iter().sum::<f64>();
            n += scores.len();
        }
        let mean = total / n as f64;
        assert!((0.49..=0.51).contains(&mean), "{mean}");
    }

    #[test]
    fn explanation_dump_has_contract_keys() {
        let s = Sample::from_text("a", "one two", 1, Split::Eval).unwrap();
        let e = explain_random(&s, 1);
        let v: serde_json::Value = serde_json::to_value(&e).unwrap();
        for key in [
            "sample_id",
            "method",
            "target_class",
            "scores",
            "predicted_class",
            "confidence",
            "params",
            "seed",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let mut buf = Vec::new();
        write_explanations(&mut buf, std::slice::from_ref(&e)).unwrap();
        assert_eq!(read_explanations(buf.as_slice()).unwrap(), vec![e]);
    }
}
