//! Planted-keyword corpora, simulated workers, and the end-to-end experiment.

mod corpus;
mod experiment;
mod worker;

pub use corpus::{gen_corpus, CorpusSpec};
pub use experiment::{
    explain_all, keyword_oracle_explanation, run_experiment, simulate_annotations, ExperimentOutput,
};
pub use worker::{simulate_worker, OracleConfig};
