use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::tokenize::{tokenize, Word};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Train,
    Eval,
    MisclassifiedEval,
}

/// One labeled text. `label` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub words: Vec<Word>,
    pub label: usize,
    pub split: Split,
}

impl Sample {
    pub fn from_text(
        id: impl Into<String>,
        text: &str,
        label: usize,
        split: Split,
    ) -> Result<Self> {
        let id = id.into();
        let words = tokenize(text)?;
        if !words.iter().any(|w| !w.is_punctuation) {
            return Err(Error::data(format!(
                "sample {id} has no non-punctuation word"
            )));
        }
        if label == 0 {
            return Err(Error::data(format!("sample {id}: labels are 1-based")));
        }
        Ok(Self {
            id,
            words,
            label,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn text(&self) -> String {
        self.words
            .iter()
            .map(|w| w.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Positions of words that can be ranked and shown.
    pub fn eligible_positions(&self) -> Vec<usize> {
        self.words
            .iter()
            .enumerate()
            .filter(|(_, w)| w.is_eligible())
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRecord {
    id: String,
    text: String,
    label: usize,
    #[serde(default, skip_serializing_if = "is_train")]
    split: Split,
}

fn is_train(s: &Split) -> bool {
    *s == Split::Train
}

/// Reads the JSON-lines corpus format `{"id", "text", "label"}` with an
/// optional `"split"` field (defaults to `train`).
pub fn read_corpus(reader: impl BufRead) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("corpus line {}: {e}", n + 1)))?;
        out.push(Sample::from_text(rec.id, &rec.text, rec.label, rec.split)?);
    }
    Ok(out)
}

pub fn write_corpus(mut writer: impl Write, samples: &[Sample]) -> Result<()> {
    for s in samples {
        let rec = SampleRecord {
            id: s.id.clone(),
            text: s.text(),
            label: s.label,
            split: s.split,
        };
        serde_json::to_writer(&mut writer, &rec)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
