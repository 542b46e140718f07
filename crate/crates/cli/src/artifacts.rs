//! File names and typed readers/writers for everything a stage leaves in the
//! output directory.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use saleval::aggregation::AggregateMatrix;
use saleval::annotation::{read_export, write_export, ExportRecord};
use saleval::saliency::{read_explanations, write_explanations, Explanation};
use saleval::tasks::{read_tasks, write_tasks, AssignmentPlan, Task};
use saleval::text::{read_corpus, write_corpus, Sample, TextClassifier};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const CONFIG: &str = "config.toml";
pub const CORPUS: &str = "corpus.jsonl";
pub const MODEL: &str = "model.json";
pub const TRAIN_REPORT: &str = "train_report.json";
pub const SELECTED: &str = "selected.jsonl";
pub const EXPLANATIONS: &str = "explanations.jsonl";
pub const OVERLAP: &str = "overlap.json";
pub const OVERLAP_TXT: &str = "overlap.txt";
pub const TASKS: &str = "tasks.jsonl";
pub const PLAN: &str = "plan.json";
pub const STORE_LOG: &str = "annotations.log";
pub const ANNOTATIONS: &str = "annotations.jsonl";
pub const FILTER_REPORTS: &str = "filter_reports.json";
pub const AGGREGATE: &str = "aggregate.json";
pub const SCORES: &str = "scores.json";
pub const SCORES_TXT: &str = "scores.txt";
pub const FLIPS: &str = "flips.json";
pub const FLIPS_TXT: &str = "flips.txt";
pub const FLIPS_CSV: &str = "flips_histogram.csv";
pub const SUFFCOMP: &str = "suffcomp.json";
pub const SUFFCOMP_TXT: &str = "suffcomp.txt";
pub const MISCLASSIFIED_TXT: &str = "misclassified_counts.txt";
pub const AUDIT_SAMPLE: &str = "audit_sample.jsonl";
pub const AUDIT: &str = "audit.json";
pub const REPORT_DIR: &str = "report";

/// Raised when a stage's input has not been produced yet.
#[derive(Debug, thiserror::Error)]
#[error("missing input file {}: run `saleval {producer}` first", path.display())]
pub struct MissingInput {
    pub path: PathBuf,
    pub producer: &'static str,
}

fn producer(name: &str) -> &'static str {
    match name {
        CORPUS | MODEL | TRAIN_REPORT => "train",
        SELECTED | EXPLANATIONS => "explain",
        TASKS => "gen-tasks",
        PLAN => "plan",
        STORE_LOG => "serve",
        ANNOTATIONS => "export",
        AGGREGATE => "aggregate",
        SCORES => "score",
        SUFFCOMP => "suffcomp",
        _ => "simulate",
    }
}

/// The output directory of one experiment.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub dir: PathBuf,
}

impl Workspace {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn exists(&self, name: &str) -> bool {
        self.path(name).exists()
    }

    /// Path of an input that must already exist.
    pub fn input(&self, name: &str) -> Result<PathBuf> {
        let path = self.path(name);
        if path.exists() {
            Ok(path)
        } else {
            Err(MissingInput {
                path,
                producer: producer(name),
            }
            .into())
        }
    }

    fn open(&self, name: &str) -> Result<BufReader<File>> {
        let path = self.input(name)?;
        let f = File::open(&path).with_context(|| format!("opening {}", path.display()))?;
        Ok(BufReader::new(f))
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        std::fs::create_dir_all(&self.dir)
            .with_context(|| format!("creating {}", self.dir.display()))?;
        let path = self.path(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(BufWriter::new(f))
    }

    fn with_writer(
        &self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
    ) -> Result<()> {
        let mut w = self.create(name)?;
        f(&mut w)?;
        w.flush()
            .with_context(|| format!("writing {}", self.path(name).display()))?;
        Ok(())
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<T> {
        let r = self.open(name)?;
        serde_json::from_reader(r).with_context(|| format!("parsing {}", self.path(name).display()))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        self.with_writer(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            w.write_all(b"\n")?;
            Ok(())
        })
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        self.with_writer(name, |w| Ok(w.write_all(text.as_bytes())?))
    }

    pub fn read_corpus(&self, name: &str) -> Result<Vec<Sample>> {
        read_corpus(self.open(name)?)
            .with_context(|| format!("reading {}", self.path(name).display()))
    }

    pub fn write_corpus(&self, name: &str, samples: &[Sample]) -> Result<()> {
        self.with_writer(name, |w| Ok(write_corpus(w, samples)?))
    }

    pub fn read_model(&self) -> Result<TextClassifier> {
        let path = self.input(MODEL)?;
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading {}", path.display()))?;
        TextClassifier::from_json(&text).with_context(|| format!("loading {}", path.display()))
    }

    pub fn write_model(&self, model: &TextClassifier) -> Result<()> {
        let json = model.to_json()?;
        self.write_text(MODEL, &json)
    }

    pub fn read_explanations(&self) -> Result<Vec<Explanation>> {
        read_explanations(self.open(EXPLANATIONS)?)
            .with_context(|| format!("reading {}", self.path(EXPLANATIONS).display()))
    }

    pub fn write_explanations(&self, explanations: &[Explanation]) -> Result<()> {
        self.with_writer(EXPLANATIONS, |w| Ok(write_explanations(w, explanations)?))
    }

    pub fn read_tasks(&self) -> Result<Vec<Task>> {
        read_tasks(self.open(TASKS)?)
            .with_context(|| format!("reading {}", self.path(TASKS).display()))
    }

    pub fn write_tasks(&self, tasks: &[Task]) -> Result<()> {
        self.with_writer(TASKS, |w| Ok(write_tasks(w, tasks)?))
    }

    pub fn read_plan(&self) -> Result<AssignmentPlan> {
        self.read_json(PLAN)
    }

    pub fn read_annotations(&self) -> Result<Vec<ExportRecord>> {
        read_export(self.open(ANNOTATIONS)?)
            .with_context(|| format!("reading {}", self.path(ANNOTATIONS).display()))
    }

    pub fn write_annotations(&self, records: &[ExportRecord]) -> Result<()> {
        self.with_writer(ANNOTATIONS, |w| Ok(write_export(w, records)?))
    }

    pub fn read_aggregate(&self) -> Result<AggregateMatrix> {
        self.read_json(AGGREGATE)
    }

    /// A sub-directory workspace (used for the report bundle).
    pub fn child(&self, name: &str) -> Workspace {
        Workspace::new(self.dir.join(name))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_input_points_at_producer() {
        let tmp = tempfile::tempdir().unwrap();
        let ws = Workspace::new(tmp.path());
        let err = ws.input(TASKS).unwrap_err().to_string();
        assert!(
            err.contains("tasks.jsonl") && err.contains("saleval gen-tasks"),
            "{err}"
        );
    }

    #[test]
    fn json_round_trips_with_trailing_newline() {
        let tmp = tempfile::tempdir().unwrap();
        let ws = Workspace::new(tmp.path().join("nested"));
        ws.write_json("x.json", &vec![1, 2, 3]).unwrap();
        assert!(std::fs::read_to_string(ws.path("x.json"))
            .unwrap()
            .ends_with("]\n"));
        let back: Vec<i32> = ws.read_json("x.json").unwrap();
        assert_eq!(back, [1, 2, 3]);
    }
}
