//! Human-in-the-loop evaluation of text saliency methods.
//!
//! The pipeline trains a small classifier, explains its predictions with
//! several saliency methods, shows crowd workers only the top-k words of each
//! explanation, and scores every method by how often workers still recover
//! the label.

pub mod aggregation;
pub mod analytics;
pub mod annotation;
pub mod autodiff;
pub mod config;
pub mod error;
pub mod saliency;
pub mod seed;
pub mod simulation;
pub mod tasks;
pub mod text;

pub use error::{Error, Result};
