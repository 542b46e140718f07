use crate::autodiff::{RescaleOptions, Tensor};
use crate::error::{Error, Result};
use crate::text::AttributionModel;

use super::Baseline;

/// Reference embeddings `[T, d]` for a baseline.
pub(crate) fn baseline_embeddings<M: AttributionModel + ?Sized>(
    model: &M,
    ids: &[usize],
    baseline: Baseline,
) -> Tensor {
    match baseline {
        Baseline::Zero => {
            let x = model.embed(ids);
            Tensor::zeros(x.shape())
        }
        Baseline::Pad => model.embed(&vec![model.pad_id(); ids.len()]),
    }
}

fn row_sums(t: &Tensor) -> Vec<f64> {
    (0..t.rows()).map(|r| t.row(r).iter().sum()).collect()
}

/// Per-position L2 norm of the target logit's gradient.
pub fn vanilla_gradient_scores<M: AttributionModel + ?Sized>(
    model: &M,
    ids: &[usize],
    class: usize,
) -> Result<Vec<f64>> {
    let g = model.target_graph(ids, class)?;
    let (_, grad) = g.value_and_grad(&model.embed(ids))?;
    Ok((0..grad.rows())
        .map(|r| grad.row(r).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect())
}

/// Per-position signed sum of embedding times gradient.
pub fn input_x_grad_scores<M: AttributionModel + ?Sized>(
    model: &M,
    ids: &[usize],
    class: usize,
) -> Result<Vec<f64>> {
    let g = model.target_graph(ids, class)?;
    let x = model.embed(ids);
    let (_, grad) = g.value_and_grad(&x)?;
    Ok(row_sums(&x.zip_map(&grad, |a, b| a * b)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegratedGradientResult {
    pub scores: Vec<f64>,
    /// `|Σ scores − (f(x) − f(baseline))|`.
    pub completeness_residual: f64,
    /// `f(x) − f(baseline)`.
    pub delta: f64,
}

/// Right-endpoint Riemann approximation of integrated gradients.
pub fn integrated_gradient_scores<M: AttributionModel + ?Sized>(
    model: &M,
    ids: &[usize],
    class: usize,
    steps: usize,
    baseline: Baseline,
) -> Result<IntegratedGradientResult> {
    if steps == 0 {
        return Err(Error::invalid(
            "integrated gradient needs at least one step",
        ));
    }
    let g = model.target_graph(ids, class)?;
    let x = model.embed(ids);
    let b = baseline_embeddings(model, ids, baseline);
    let diff = x.zip_map(&b, |x, b| x - b);
    let mut total = Tensor::zeros(x.shape());
    let mut fx = 0.0;
    for m in 1..=steps {
        let alpha = m as f64 / steps as f64;
        let point = b.zip_map(&diff, |b, d| b + alpha * d);
        let (value, grad) = g.value_and_grad(&point)?;
        if m == steps {
            fx = value;
        }
        total.add_assign(&grad);
    }
    let inv = 1.0 / steps as f64;
    let scores = row_sums(&diff.zip_map(&total, |d, g| d * g * inv));
    let delta = fx - g.value(&b)?;
    let completeness_residual = (scores.iter().sum::<f64>() - delta).abs();
    Ok(IntegratedGradientResult {
        scores,
        completeness_residual,
        delta,
    })
}

/// DeepLIFT with the rescale rule: multipliers from the rescale backward pass
/// times the difference from the baseline, summed per position.
pub fn deeplift_scores<M: AttributionModel + ?Sized>(
    model: &M,
    ids: &[usize],
    class: usize,
    baseline: Baseline,
    options: RescaleOptions,
) -> Result<Vec<f64>> {
    let g = model.target_graph(ids, class)?;
    let x = model.embed(ids);
    let b = baseline_embeddings(model, ids, baseline);
    let actual = g.graph.forward(&g.bindings(&x))?;
    let reference = g.graph.forward(&g.bindings(&b))?;
    let mut mult = g
        .graph
        .backward_rescale(&actual, &reference, g.output, options)?;
    let m = mult.take(g.input).expect("input is a leaf");
    let diff = x.zip_map(&b, |x, b| x - b);
    Ok(row_sums(&diff.zip_map(&m, |d, m| d * m)))
}
