//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aggregation::WeightBasis;
use crate::annotation::QualityRule;
use crate::error::{Error, Result};
use crate::saliency::{ExplainOptions, Method};
use crate::seed::derive_seed;
use crate::simulation::CorpusSpec;
use crate::tasks::TaskOptions;
use crate::text::{ClassifierConfig, SelectionMode, TrainOptions};

/// Simulated worker behaviour (the keyword map comes from the corpus spec).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkerSettings {
    pub noise: f64,
    pub dont_know_if_no_keyword: bool,
    /// Milliseconds a simulated worker spends per task.
    pub elapsed_ms: u64,
}

impl Default for WorkerSettings {
    fn default() -> Self {
        Self {
            noise: 0.0,
            dont_know_if_no_keyword: true,
            elapsed_ms: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Root seed; every stage derives its own seed from it.
    pub seed: u64,
    /// JSON-lines corpus. The synthetic `corpus` spec is used when absent.
    pub corpus_path: Option<PathBuf>,
    pub corpus: CorpusSpec,
    pub model: ClassifierConfig,
    pub train: TrainOptions,
    pub methods: Vec<Method>,
    pub ks: Vec<usize>,
    /// Samples evaluated (N).
    pub samples: usize,
    pub balanced: bool,
    pub selection: SelectionMode,
    pub replication: usize,
    pub batch_size: usize,
    pub explain: ExplainOptions,
    pub tasks: TaskOptions,
    pub workers: WorkerSettings,
    pub quality: QualityRule,
    pub weight_basis: WeightBasis,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            corpus_path: None,
            corpus: CorpusSpec::default(),
            model: ClassifierConfig::default(),
            train: TrainOptions::default(),
            methods: Method::STANDARD.to_vec(),
            ks: vec![5, 10, 20, 30, 40],
            samples: 100,
            balanced: true,
            selection: SelectionMode::Correct,
            replication: 5,
            batch_size: 100,
            explain: ExplainOptions::default(),
            tasks: TaskOptions::default(),
            workers: WorkerSettings::default(),
            quality: QualityRule::default(),
            weight_basis: WeightBasis::AllMethods,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn field_error(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::invalid(format!("config field `{field}`: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::File {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(field_error("methods", "must not be empty"));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(m) = self.methods.iter().find(|m| !seen.insert(**m)) {
            return Err(field_error("methods", format!("`{m}` listed twice")));
        }
        if self.ks.is_empty() || self.ks[0] == 0 {
            return Err(field_error("ks", "must be non-empty and positive"));
        }
        if self.ks.windows(2).any(|w| w[0] >= w[1]) {
            return Err(field_error("ks", "must be strictly increasing"));
        }
        if self.samples == 0 {
            return Err(field_error("samples", "must be positive"));
        }
        if self.replication == 0 {
            return Err(field_error("replication", "must be positive"));
        }
        if self.batch_size == 0 || self.batch_size > self.samples {
            return Err(field_error("batch_size", "must be in 1..=samples"));
        }
        if self.explain.ig_steps == 0 {
            return Err(field_error("explain.ig_steps", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.workers.noise) {
            return Err(field_error("workers.noise", "must lie in [0, 1]"));
        }
        if self.model.classes != self.corpus.classes && self.corpus_path.is_none() {
            return Err(field_error(
                "model.classes",
                format!(
                    "is {} but the synthetic corpus has {}",
                    self.model.classes, self.corpus.classes
                ),
            ));
        }
        self.model.validate().map_err(|e| field_error("model", e))?;
        self.quality
            .validate()
            .map_err(|e| field_error("quality", e))?;
        Ok(())
    }

    /// Seed for one pipeline stage.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }
}
