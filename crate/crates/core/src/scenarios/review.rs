//! Human-review round trip: a seeded sample exported as TSV with an empty
//! verdict column, and an import that drops rows marked bad.

use super::ScenarioSample;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use std::path::Path;

pub const REVIEW_HEADER: [&str; 5] = ["id", "question", "gold_answer", "false_answer", "verdict"];

#[derive(Debug, thiserror::Error)]
pub enum ReviewError {
    #[error("asked for {n} review rows but only {available} samples exist")]
    TooMany { n: usize, available: usize },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("review row {0} does not match any sample")]
    UnknownId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReviewVerdict {
    /// Verdict column left blank.
    Unreviewed,
    Keep,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewRow {
    pub id: String,
    pub question: String,
    pub gold_answer: String,
    pub false_answer: String,
    pub verdict: ReviewVerdict,
}

/// Seeded uniform sample of `n` samples, in input order.
pub fn export_review(samples: &[ScenarioSample], n: usize, seed: u64) -> Result<Vec<ReviewRow>, ReviewError> {
    if n > samples.len() {
        return Err(ReviewError::TooMany { n, available: samples.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, samples.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|i| {
            let s = &samples[i];
            ReviewRow {
                id: s.id.clone(),
                question: s.question.clone(),
                gold_answer: s.gold_answer.clone(),
                false_answer: s.false_answer.clone().unwrap_or_default(),
                verdict: ReviewVerdict::Unreviewed,
            }
        })
        .collect())
}

/// Drops every sample whose review row is marked bad.
pub fn import_review(samples: &[ScenarioSample], rows: &[ReviewRow]) -> Result<Vec<ScenarioSample>, ReviewError> {
    let ids: HashSet<&str> = samples.iter().map(|s| s.id.as_str()).collect();
    if let Some(r) = rows.iter().find(|r| !ids.contains(r.id.as_str())) {
        return Err(ReviewError::UnknownId(r.id.clone()));
    }
    let dropped: HashSet<&str> =
        rows.iter().filter(|r| r.verdict == ReviewVerdict::Drop).map(|r| r.id.as_str()).collect();
    Ok(samples.iter().filter(|s| !dropped.contains(s.id.as_str())).cloned().collect())
}

fn escape(field: &str) -> String {
    field.replace('\\', "\\\\").replace('\t', "\\t").replace('\n', "\\n").replace('\r', "\\r")
}

fn unescape(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

pub fn render_review_tsv(rows: &[ReviewRow]) -> String {
    let mut out = REVIEW_HEADER.join("\t");
    out.push('\n');
    for r in rows {
        let verdict = match r.verdict {
            ReviewVerdict::Unreviewed => "",
            ReviewVerdict::Keep => "ok",
            ReviewVerdict::Drop => "bad",
        };
        let fields = [r.id.as_str(), &r.question, &r.gold_answer, &r.false_answer, verdict];
        out.push_str(&fields.map(escape).join("\t"));
        out.push('\n');
    }
    out
}

/// Verdict column: blank, `ok`/`keep`/`good`/`y`, or `bad`/`drop`/`reject`/`n`.
pub fn parse_review_tsv(text: &str) -> Result<Vec<ReviewRow>, ReviewError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r').split('\t').eq(REVIEW_HEADER) => {}
        _ => {
            return Err(ReviewError::Format {
                line: 1,
                message: format!("expected header {}", REVIEW_HEADER.join(" ")),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != REVIEW_HEADER.len() {
            return Err(ReviewError::Format {
                line: i + 1,
                message: format!("expected 5 columns, found {}", cols.len()),
            });
        }
        let verdict = match cols[4].trim().to_ascii_lowercase().as_str() {
            "" => ReviewVerdict::Unreviewed,
            "ok" | "keep" | "good" | "y" | "yes" => ReviewVerdict::Keep,
            "bad" | "drop" | "reject" | "n" | "no" => ReviewVerdict::Drop,
            other => return Err(ReviewError::Format { line: i + 1, message: format!("unknown verdict {other:?}") }),
        };
        rows.push(ReviewRow {
            id: unescape(cols[0]),
            question: unescape(cols[1]),
            gold_answer: unescape(cols[2]),
            false_answer: unescape(cols[3]),
            verdict,
        });
    }
    Ok(rows)
}

pub fn write_review_tsv(path: &Path, rows: &[ReviewRow]) -> Result<(), ReviewError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| ReviewError::Io { path: dir.display().to_string(), source })?;
    }
    std::fs::write(path, render_review_tsv(rows))
        .map_err(|source| ReviewError::Io { path: path.display().to_string(), source })
}

pub fn read_review_tsv(path: &Path) -> Result<Vec<ReviewRow>, ReviewError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| ReviewError::Io { path: path.display().to_string(), source })?;
    parse_review_tsv(&text)
}
