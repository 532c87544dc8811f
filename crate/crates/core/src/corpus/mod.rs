//! MRC corpus ingestion, seeded evaluation splits and JSONL persistence.

mod ingest;
mod jsonl;
mod manifest;
mod split;

pub use ingest::{ingest_squad, ingest_webqa, IngestOutcome, IngestWarning};
pub use jsonl::{read_jsonl, write_jsonl, write_jsonl_to};
pub use manifest::DatasetManifest;
pub use split::sample_split;

use crate::textops::Language;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {location}: {message}")]
    Layout { path: PathBuf, location: String, message: String },
    #[error("{path}: line {line}: {message}")]
    Line { path: PathBuf, line: usize, message: String },
    #[error("split size {n} exceeds record count {available}")]
    SplitTooLarge { n: usize, available: usize },
    #[error("split size {0} is odd")]
    SplitOdd(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Dev,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// One machine-reading-comprehension instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QARecord {
    pub id: String,
    #[serde(rename = "dataset")]
    pub dataset_id: String,
    pub question: String,
    pub context: String,
    pub answer: String,
    pub language: Language,
    #[serde(default)]
    pub split: Option<Split>,
}
