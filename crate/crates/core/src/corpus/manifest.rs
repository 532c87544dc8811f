use super::{CorpusError, QARecord};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

/// Summary written next to a dataset's JSONL payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_id: String,
    pub record_count: usize,
    pub split_counts: BTreeMap<String, usize>,
    pub construction_seed: Option<u64>,
    pub source_path: String,
    /// SHA-256 of the payload file bytes, lowercase hex.
    pub checksum: String,
}

impl DatasetManifest {
    pub fn new(dataset_id: &str, records: &[QARecord], seed: Option<u64>, source_path: &str, payload: &[u8]) -> Self {
        let mut split_counts = BTreeMap::new();
        for r in records {
            if let Some(s) = r.split {
                *split_counts.entry(s.as_str().to_owned()).or_insert(0) += 1;
            }
        }
        Self {
            dataset_id: dataset_id.to_owned(),
            record_count: records.len(),
            split_counts,
            construction_seed: seed,
            source_path: source_path.to_owned(),
            checksum: hex::encode(Sha256::digest(payload)),
        }
    }

    /// Split counts sum to the record count whenever any split is assigned.
    pub fn is_consistent(&self) -> bool {
        self.split_counts.is_empty() || self.split_counts.values().sum::<usize>() == self.record_count
    }

    pub fn write(&self, path: &Path) -> Result<(), CorpusError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })
    }

    pub fn read(path: &Path) -> Result<Self, CorpusError> {
        let bytes = std::fs::read(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
        serde_json::from_slice(&bytes).map_err(|source| CorpusError::Json { path: path.to_path_buf(), source })
    }
}
