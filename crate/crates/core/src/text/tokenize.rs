use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One whitespace-delimited word of a sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Word {
    pub text: String,
    pub is_punctuation: bool,
    pub is_special: bool,
}

impl Word {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        let is_special = is_special_token(&text);
        let is_punctuation = !is_special && text.chars().all(|c| !c.is_alphanumeric());
        Self {
            text,
            is_punctuation,
            is_special,
        }
    }

    /// Whether the word may be ranked, shown, or hidden in a task.
    pub fn is_eligible(&self) -> bool {
        !self.is_punctuation && !self.is_special
    }
}

/// Markup-like tokens such as `<br>` or `[SEP]`.
fn is_special_token(token: &str) -> bool {
    let bracketed = |open: char, close: char| {
        token.len() > 2
            && token.starts_with(open)
            && token.ends_with(close)
            && token[1..token.len() - 1].chars().any(char::is_alphanumeric)
    };
    bracketed('<', '>') || bracketed('[', ']')
}

/// Lowercases and splits on whitespace. Positions are preserved one-to-one.
pub fn tokenize(text: &str) -> Result<Vec<Word>> {
    let words: Vec<Word> = text
        .split_whitespace()
        .map(|w| Word::new(w.to_lowercase()))
        .collect();
    if words.is_empty() {
        return Err(Error::invalid("text is empty or whitespace-only"));
    }
    Ok(words)
}
