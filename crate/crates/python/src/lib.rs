//! Python bindings: corpus generation, training, explanation, top-k
//! selection, voting, scoring, and the simulated end-to-end run.
//!
//! Structured results cross the boundary as JSON and come back to Python as
//! plain dicts and lists.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use saleval::aggregation::{majority_outcome as vote, AccuracyTable, ScoreReport, WeightBasis};
use saleval::config::ExperimentConfig;
use saleval::saliency::{explain as explain_sample, explain_random, top_k_words, Method};
use saleval::simulation::{gen_corpus, keyword_oracle_explanation, run_experiment as run};
use saleval::text::{train as train_model, Split, TextClassifier};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

fn parse_method(name: &str) -> PyResult<Method> {
    name.parse().map_err(err)
}

fn parse_split(name: &str) -> PyResult<Split> {
    serde_json::from_value(serde_json::Value::String(name.to_string())).map_err(err)
}

/// Experiment configuration.
#[pyclass(name = "Config", from_py_object)]
#[derive(Clone)]
pub struct PyConfig {
    inner: ExperimentConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    fn new() -> Self {
        Self {
            inner: ExperimentConfig::default(),
        }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ExperimentConfig::from_toml_str(text).map_err(err)?,
        })
    }

    fn to_toml(&self) -> PyResult<String> {
        self.inner.to_toml_string().map_err(err)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn methods(&self) -> Vec<String> {
        self.inner
            .methods
            .iter()
            .map(|m| m.as_str().to_string())
            .collect()
    }

    #[setter]
    fn set_methods(&mut self, names: Vec<String>) -> PyResult<()> {
        self.inner.methods = names
            .iter()
            .map(|n| parse_method(n))
            .collect::<PyResult<_>>()?;
        Ok(())
    }

    #[getter]
    fn ks(&self) -> Vec<usize> {
        self.inner.ks.clone()
    }

    #[setter]
    fn set_ks(&mut self, ks: Vec<usize>) {
        self.inner.ks = ks;
    }

    #[getter]
    fn samples(&self) -> usize {
        self.inner.samples
    }

    #[setter]
    fn set_samples(&mut self, n: usize) {
        self.inner.samples = n;
    }

    #[getter]
    fn batch_size(&self) -> usize {
        self.inner.batch_size
    }

    #[setter]
    fn set_batch_size(&mut self, n: usize) {
        self.inner.batch_size = n;
    }

    #[getter]
    fn replication(&self) -> usize {
        self.inner.replication
    }

    #[setter]
    fn set_replication(&mut self, n: usize) {
        self.inner.replication = n;
    }

    fn __repr__(&self) -> String {
        format!(
            "Config(seed={}, samples={}, methods={:?}, ks={:?})",
            self.inner.seed,
            self.inner.samples,
            self.methods(),
            self.inner.ks
        )
    }
}

/// One labeled text.
#[pyclass(name = "Sample", from_py_object)]
#[derive(Clone)]
pub struct PySample {
    inner: saleval::text::Sample,
}

#[pymethods]
impl PySample {
    #[new]
    #[pyo3(signature = (id, text, label, split = "eval"))]
    fn new(id: &str, text: &str, label: usize, split: &str) -> PyResult<Self> {
        let split = parse_split(split)?;
        Ok(Self {
            inner: saleval::text::Sample::from_text(id, text, label, split).map_err(err)?,
        })
    }

    #[getter]
    fn id(&self) -> String {
        self.inner.id.clone()
    }

    #[getter]
    fn label(&self) -> usize {
        self.inner.label
    }

    #[getter]
    fn words(&self) -> Vec<String> {
        self.inner.words.iter().map(|w| w.text.clone()).collect()
    }

    #[getter]
    fn text(&self) -> String {
        self.inner.text()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Sample(id={:?}, label={}, words={})",
            self.inner.id,
            self.inner.label,
            self.inner.len()
        )
    }
}

/// Trained attention classifier.
#[pyclass(name = "Classifier")]
pub struct PyClassifier {
    inner: TextClassifier,
}

#[pymethods]
impl PyClassifier {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: TextClassifier::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.config().classes
    }

    /// `(predicted class, class probabilities)`; classes are 1-based.
    fn predict(&self, sample: &PySample) -> PyResult<(usize, Vec<f64>)> {
        let out = self.inner.forward_full(&sample.inner).map_err(err)?;
        Ok((out.predicted_class, out.confidence))
    }
}

/// Synthetic planted-keyword corpus for `config` (seeded like the pipeline).
#[pyfunction]
fn generate_corpus(config: &PyConfig) -> PyResult<Vec<PySample>> {
    let mut spec = config.inner.corpus.clone();
    spec.seed = config.inner.stage_seed("corpus");
    Ok(gen_corpus(&spec)
        .map_err(err)?
        .into_iter()
        .map(|inner| PySample { inner })
        .collect())
}

/// Trains a classifier; returns it with the training report as a dict.
#[pyfunction]
fn train(
    py: Python<'_>,
    config: &PyConfig,
    corpus: Vec<PySample>,
) -> PyResult<(PyClassifier, Py<PyAny>)> {
    let samples: Vec<_> = corpus.into_iter().map(|s| s.inner).collect();
    let mut model_cfg = config.inner.model.clone();
    model_cfg.seed = config.inner.stage_seed("model");
    let (model, report) = py
        .detach(|| train_model(model_cfg, &samples, config.inner.train))
        .map_err(err)?;
    Ok((PyClassifier { inner: model }, to_py(py, &report)?))
}

/// Word-level saliency scores of one method.
#[pyfunction]
#[pyo3(signature = (model, sample, method, ig_steps = 50, seed = 0))]
fn explain(
    model: &PyClassifier,
    sample: &PySample,
    method: &str,
    ig_steps: usize,
    seed: u64,
) -> PyResult<Vec<f64>> {
    let method = parse_method(method)?;
    let e =
        match method {
            Method::Random => explain_random(&sample.inner, seed),
            Method::KeywordOracle => return Err(err(
                "keyword_oracle needs the corpus keyword map; call keyword_oracle(config, sample)",
            )),
            _ => {
                let opts = saleval::saliency::ExplainOptions {
                    ig_steps,
                    seed,
                    ..Default::default()
                };
                explain_sample(&model.inner, &sample.inner, method, &opts).map_err(err)?
            }
        };
    Ok(e.scores)
}

/// Positions of the `k` highest-scoring non-punctuation words.
#[pyfunction]
#[pyo3(signature = (sample, scores, k, rank_by_abs = false))]
fn top_k(sample: &PySample, scores: Vec<f64>, k: usize, rank_by_abs: bool) -> PyResult<Vec<usize>> {
    Ok(top_k_words(&scores, &sample.inner, k, rank_by_abs)
        .map_err(err)?
        .positions)
}

/// Binary outcome of a task: 1 when the true label wins a strict plurality.
#[pyfunction]
fn majority_outcome(labels: Vec<usize>, truth: usize) -> u8 {
    vote(&labels, truth)
}

/// Weights, scores, and ranks from an accuracy table `p[method][k]` in [0, 1].
#[pyfunction]
#[pyo3(signature = (methods, ks, p, exclude_random = false))]
fn score_table(
    py: Python<'_>,
    methods: Vec<String>,
    ks: Vec<usize>,
    p: Vec<Vec<f64>>,
    exclude_random: bool,
) -> PyResult<Py<PyAny>> {
    let table = AccuracyTable {
        methods: methods
            .iter()
            .map(|m| parse_method(m))
            .collect::<PyResult<_>>()?,
        ks,
        p,
    };
    let basis = if exclude_random {
        WeightBasis::ExcludeRandom
    } else {
        WeightBasis::AllMethods
    };
    to_py(py, &ScoreReport::build(&table, basis).map_err(err)?)
}

/// Runs the whole protocol with simulated workers. Returns a dict with the
/// training report, aggregate matrix, scores, flips, and overlap.
#[pyfunction]
fn run_experiment(py: Python<'_>, config: &PyConfig) -> PyResult<Py<PyAny>> {
    let cfg = config.inner.clone();
    let out = py.detach(|| run(&cfg)).map_err(err)?;
    let summary = serde_json::json!({
        "train_report": out.train_report,
        "tasks": out.tasks.len(),
        "annotations": out.annotations.len(),
        "aggregate": out.aggregate,
        "scores": out.scores,
        "flips": out.flips,
        "overlap": out.overlap,
    });
    to_py(py, &summary)
}

/// Ideal explanation for a planted-keyword sample under `config`'s corpus.
#[pyfunction]
fn keyword_oracle(config: &PyConfig, sample: &PySample) -> Vec<f64> {
    let mut spec = config.inner.corpus.clone();
    spec.seed = config.inner.stage_seed("corpus");
    keyword_oracle_explanation(&sample.inner, &spec.keyword_classes()).scores
}

#[pymodule]
#[pyo3(name = "saleval")]
fn saleval_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PySample>()?;
    m.add_class::<PyClassifier>()?;
    m.add_function(wrap_pyfunction!(generate_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(explain, m)?)?;
    m.add_function(wrap_pyfunction!(top_k, m)?)?;
    m.add_function(wrap_pyfunction!(majority_outcome, m)?)?;
    m.add_function(wrap_pyfunction!(score_table, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(keyword_oracle, m)?)?;
    m.add(
        "METHODS",
        Method::STANDARD
            .iter()
            .map(|m| m.as_str())
            .collect::<Vec<_>>(),
    )?;
    Ok(())
}
