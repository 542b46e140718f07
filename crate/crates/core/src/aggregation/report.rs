use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{scores, weights, AccuracyTable};
use crate::error::{Error, Result};
use crate::saliency::Method;

/// Which methods enter the column sums of the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightBasis {
    #[default]
    AllMethods,
    ExcludeRandom,
}

/// Ranks (1 = best) by descending value; equal values share the best rank
/// and the next rank skips accordingly (1, 2, 2, 4).
pub fn competition_ranks(values: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|v| 1 + values.iter().filter(|&&o| o > *v).count())
        .collect()
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let f = 10f64.powi(decimals);
    (v * f).round() / f
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub methods: Vec<Method>,
    pub ks: Vec<usize>,
    /// Accuracy fractions `p[j][k]`.
    pub p: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    /// Scores on the fraction scale.
    pub s: Vec<f64>,
    /// Ranks within each k column, on whole-percent values.
    pub column_ranks: Vec<Vec<usize>>,
    /// Ranks by score, on one-decimal percent values.
    pub score_ranks: Vec<usize>,
    pub weight_basis: WeightBasis,
}

impl ScoreReport {
    pub fn build(table: &AccuracyTable, basis: WeightBasis) -> Result<Self> {
        if table.p.len() != table.methods.len() {
            return Err(Error::invalid(
                "accuracy table rows do not match its methods",
            ));
        }
        let basis_rows: Vec<Vec<f64>> = table
            .methods
            .iter()
            .zip(&table.p)
            .filter(|(m, _)| basis == WeightBasis::AllMethods || **m != Method::Random)
            .map(|(_, r)| r.clone())
            .collect();
        let w = weights(&basis_rows)?;
        let s = scores(&table.p, &w);
        let kk = table.ks.len();
        let mut column_ranks = vec![vec![0; kk]; table.p.len()];
        for k in 0..kk {
            let col: Vec<f64> = table.p.iter().map(|r| round_to(r[k] * 100.0, 0)).collect();
            for (j, r) in competition_ranks(&col).into_iter().enumerate() {
                column_ranks[j][k] = r;
            }
        }
        let shown: Vec<f64> = s.iter().map(|v| round_to(v * 100.0, 1)).collect();
        Ok(Self {
            methods: table.methods.clone(),
            ks: table.ks.clone(),
            p: table.p.clone(),
            w,
            score_ranks: competition_ranks(&shown),
            s,
            column_ranks,
            weight_basis: basis,
        })
    }

    /// Aligned plain-text table: whole-percent accuracies and one-decimal
    /// scores, each followed by its rank in brackets.
    pub fn to_text(&self) -> String {
        let name_w = self
            .methods
            .iter()
            .map(|m| m.display_name().len())
            .max()
            .unwrap_or(6)
            .max(6);
        let mut out = String::new();
        let _ = write!(out, "{:<name_w$}", "Method");
        for k in &self.ks {
            let _ = write!(out, " {:>9}", format!("k={k}"));
        }
        let _ = writeln!(out, " {:>10}", "Score");
        for (j, m) in self.methods.iter().enumerate() {
            let _ = write!(out, "{:<name_w$}", m.display_name());
            for k in 0..self.ks.len() {
                let cell = format!("{:.0} ({})", self.p[j][k] * 100.0, self.column_ranks[j][k]);
                let _ = write!(out, " {cell:>9}");
            }
            let cell = format!("{:.1} ({})", self.s[j] * 100.0, self.score_ranks[j]);
            let _ = writeln!(out, " {cell:>10}");
        }
        let _ = write!(out, "{:<name_w$}", "w_k");
        for w in &self.w {
            let _ = write!(out, " {:>9}", format!("{w:.4}"));
        }
        out.push('\n');
        out
    }
}
