//! Prompt records and completion labelling.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::{TokenizeError, Vocab};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Factual,
    FalsePremise,
    Confabulation,
    Leading,
    MultiHop,
    Math,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Factual,
        Category::FalsePremise,
        Category::Confabulation,
        Category::Leading,
        Category::MultiHop,
        Category::Math,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Factual => "factual",
            Category::FalsePremise => "false_premise",
            Category::Confabulation => "confabulation",
            Category::Leading => "leading",
            Category::MultiHop => "multi_hop",
            Category::Math => "math",
        }
    }
}

impl std::fmt::Display for Category {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Correct,
    Hallucination,
    Other,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Correct => "correct",
            Label::Hallucination => "hallucination",
            Label::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSpec {
    pub id: u32,
    pub category: Category,
    #[serde(rename = "prompt")]
    pub text: String,
    pub correct_indicators: Vec<String>,
    pub wrong_indicators: Vec<String>,
    /// Pre-tokenized ids; when absent the text is encoded with the run's vocabulary.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<u32>>,
}

impl PromptSpec {
    pub fn token_ids(&self, vocab: &Vocab) -> Result<Vec<u32>, TokenizeError> {
        match &self.tokens {
            Some(t) => Ok(t.clone()),
            None => vocab.encode(&self.text),
        }
    }

    pub fn classify(&self, completion: &str) -> Label {
        classify_completion(completion, self)
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("dataset is not a JSON array: {0}")]
    NotArray(String),
    #[error("record {index}: {message}")]
    Record { index: usize, message: String },
    #[error("duplicate prompt id {0}")]
    DuplicateId(u32),
}

pub fn parse_dataset(text: &str) -> Result<Vec<PromptSpec>, DatasetError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let records: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| DatasetError::NotArray(e.to_string()))?;
    let mut out: Vec<PromptSpec> = Vec::with_capacity(records.len());
    let mut seen = std::collections::HashSet::new();
    for (index, r) in records.into_iter().enumerate() {
        let spec: PromptSpec = serde_json::from_value(r).map_err(|e| DatasetError::Record { index, message: e.to_string() })?;
        if !seen.insert(spec.id) {
            return Err(DatasetError::DuplicateId(spec.id));
        }
        out.push(spec);
    }
    Ok(out)
}

pub fn load_dataset(path: &Path) -> Result<Vec<PromptSpec>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    parse_dataset(&text)
}

/// The prompt set shipped with the crate.
pub fn shipped_dataset() -> Vec<PromptSpec> {
    parse_dataset(include_str!("../data/dataset.json")).expect("shipped dataset is valid")
}

fn earliest(haystack: &str, needles: &[String]) -> Option<usize> {
    needles
        .iter()
        .map(|n| caseless::default_case_fold_str(n))
        .filter(|n| !n.is_empty())
        .filter_map(|n| haystack.find(&n))
        .min()
}

/// Case-insensitive substring labelling. When both indicator sets match, the
/// earlier occurrence wins; a tie is `Other`.
pub fn classify_completion(text: &str, spec: &PromptSpec) -> Label {
    let folded = caseless::default_case_fold_str(text);
    match (earliest(&folded, &spec.correct_indicators), earliest(&folded, &spec.wrong_indicators)) {
        (None, None) => Label::Other,
        (Some(_), None) => Label::Correct,
        (None, Some(_)) => Label::Hallucination,
        (Some(c), Some(w)) if c < w => Label::Correct,
        (Some(c), Some(w)) if w < c => Label::Hallucination,
        _ => Label::Other,
    }
}
