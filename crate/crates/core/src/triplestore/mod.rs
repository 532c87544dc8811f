//! Local triple database: validated triples, `|||` rendering, and a BM25
//! inverted index with answer exclusion.

mod index;
mod triple;

pub use index::{read_triples_tsv, Bm25, Posting, ScoredTriple, Scorer, TripleId, TripleIndex, DEFAULT_LIMIT};
pub use triple::{parse_triples, parse_triples_lenient, render_triples, Triple, FIELD_SEPARATOR, TRIPLE_JOINER};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TripleError {
    #[error("{field} {value:?} is invalid: {reason}")]
    InvalidField { field: &'static str, value: String, reason: &'static str },
    #[error("line {line}: malformed triple {fragment:?}: {reason}")]
    Malformed { line: usize, fragment: String, reason: String },
    #[error("cannot index an empty triple list")]
    EmptyIndex,
    #[error("query limit must be at least 1")]
    ZeroLimit,
    #[error("unsupported index format {found}")]
    Format { found: String },
    #[error("{0}: {1}")]
    Io(String, String),
}
