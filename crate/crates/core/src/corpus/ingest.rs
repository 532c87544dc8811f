use super::{CorpusError, QARecord};
use crate::textops::{contains_answer, Language};
use log::warn;
use serde_json::Value;
use std::collections::HashSet;
use std::path::{Path, PathBuf};

/// A record that was skipped or kept with a problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestWarning {
    pub id: Option<String>,
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOutcome {
    pub records: Vec<QARecord>,
    pub warnings: Vec<IngestWarning>,
}

impl IngestOutcome {
    fn warn(&mut self, id: Option<&str>, location: String, message: impl Into<String>) {
        let w = IngestWarning { id: id.map(String::from), location, message: message.into() };
        warn!("{}: {}: {}", w.id.as_deref().unwrap_or("-"), w.location, w.message);
        self.warnings.push(w);
    }

    /// Pushes a record after the shared checks: non-empty fields, unique id,
    /// and answer containment (reported but kept).
    fn admit(&mut self, seen: &mut HashSet<String>, record: QARecord, location: String) {
        let empty = [("question", &record.question), ("context", &record.context), ("answer", &record.answer)]
            .into_iter()
            .find(|(_, v)| v.trim().is_empty());
        if let Some((field, _)) = empty {
            self.warn(Some(&record.id), location, format!("empty {field}; skipped"));
            return;
        }
        if !seen.insert(record.id.clone()) {
            self.warn(Some(&record.id), location, "duplicate id; skipped");
            return;
        }
        match contains_answer(&record.context, &record.answer, record.language) {
            Ok(true) => {}
            Ok(false) => self.warn(Some(&record.id), location, "answer not found in context"),
            Err(_) => {
                self.warn(Some(&record.id), location, "answer is only punctuation; skipped");
                return;
            }
        }
        self.records.push(record);
    }
}

fn read_json(path: &Path) -> Result<Value, CorpusError> {
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_slice(&bytes).map_err(|source| CorpusError::Json { path: path.to_path_buf(), source })
}

fn layout(path: &Path, location: impl Into<String>, message: impl Into<String>) -> CorpusError {
    CorpusError::Layout { path: PathBuf::from(path), location: location.into(), message: message.into() }
}

fn field<'a>(v: &'a Value, key: &str, path: &Path, location: &str) -> Result<&'a Value, CorpusError> {
    v.get(key).ok_or_else(|| layout(path, location, format!("missing \"{key}\"")))
}

fn str_field<'a>(v: &'a Value, key: &str, path: &Path, location: &str) -> Result<&'a str, CorpusError> {
    field(v, key, path, location)?.as_str().ok_or_else(|| layout(path, location, format!("\"{key}\" is not a string")))
}

fn array_field<'a>(v: &'a Value, key: &str, path: &Path, location: &str) -> Result<&'a Vec<Value>, CorpusError> {
    field(v, key, path, location)?
        .as_array()
        .ok_or_else(|| layout(path, location, format!("\"{key}\" is not an array")))
}

/// Reads a SQuAD v1.1 file: `data[].paragraphs[].qas[]`, keeping the first
/// gold answer of each question.
pub fn ingest_squad(path: &Path) -> Result<IngestOutcome, CorpusError> {
    let root = read_json(path)?;
    let mut out = IngestOutcome::default();
    let mut seen = HashSet::new();
    for (a, article) in array_field(&root, "data", path, "root")?.iter().enumerate() {
        let loc_a = format!("article {a}");
        for (p, paragraph) in array_field(article, "paragraphs", path, &loc_a)?.iter().enumerate() {
            let loc_p = format!("article {a}, paragraph {p}");
            let context = str_field(paragraph, "context", path, &loc_p)?;
            for (q, qa) in array_field(paragraph, "qas", path, &loc_p)?.iter().enumerate() {
                let loc_q = format!("article {a}, paragraph {p}, qa {q}");
                let id = str_field(qa, "id", path, &loc_q)?;
                let question = str_field(qa, "question", path, &loc_q)?;
                let answers = array_field(qa, "answers", path, &loc_q)?;
                let Some(first) = answers.first() else {
                    out.warn(Some(id), loc_q, "no gold answer; skipped");
                    continue;
                };
                let answer = str_field(first, "text", path, &loc_q)?;
                let record = QARecord {
                    id: id.to_owned(),
                    dataset_id: "squad".into(),
                    question: question.to_owned(),
                    context: context.to_owned(),
                    answer: answer.to_owned(),
                    language: Language::English,
                    split: None,
                };
                out.admit(&mut seen, record, loc_q);
            }
        }
    }
    Ok(out)
}

const NO_ANSWER: &str = "no_answer";

fn first_answer(v: &Value) -> Option<&str> {
    match v {
        Value::String(s) if !s.trim().is_empty() && s != NO_ANSWER => Some(s),
        Value::Array(items) => items.iter().find_map(first_answer),
        _ => None,
    }
}

/// Evidence texts in file order, with their per-evidence answers if present.
fn evidences<'a>(v: &'a Value, path: &Path, loc: &str) -> Result<Vec<(&'a str, Option<&'a str>)>, CorpusError> {
    let items: Vec<&Value> = match v {
        Value::Array(items) => items.iter().collect(),
        Value::Object(map) => map.values().collect(),
        _ => return Err(layout(path, loc, "\"evidences\" must be an array or object")),
    };
    items
        .into_iter()
        .map(|e| match e {
            Value::String(s) => Ok((s.as_str(), None)),
            Value::Object(_) => Ok((str_field(e, "evidence", path, loc)?, e.get("answer").and_then(first_answer))),
            _ => Err(layout(path, loc, "evidence must be a string or object")),
        })
        .collect()
}

/// Reads a WebQA-style file.
///
/// Accepted layouts: an array of records carrying `id`, or an object mapping
/// id to record. Each record has `question`, `evidences` (array of strings,
/// array of `{evidence, answer?}`, or an object of those) and an `answer`
/// (string or array). When the record-level answer is missing, the first
/// per-evidence answer other than `no_answer` is used. The context is the
/// first evidence that contains the answer.
pub fn ingest_webqa(path: &Path) -> Result<IngestOutcome, CorpusError> {
    let root = read_json(path)?;
    let entries: Vec<(Option<String>, &Value, String)> = match &root {
        Value::Array(items) => items
            .iter()
            .enumerate()
            .map(|(i, r)| (r.get("id").and_then(Value::as_str).map(String::from), r, format!("record {i}")))
            .collect(),
        Value::Object(map) => map.iter().map(|(k, r)| (Some(k.clone()), r, format!("record {k}"))).collect(),
        _ => return Err(layout(path, "root", "expected an array or object of records")),
    };

    let mut out = IngestOutcome::default();
    let mut seen = HashSet::new();
    for (id, record, loc) in entries {
        let Some(id) = id else {
            out.warn(None, loc, "missing id; skipped");
            continue;
        };
        let question = str_field(record, "question", path, &loc)?;
        let evs = evidences(field(record, "evidences", path, &loc)?, path, &loc)?;
        let answer = record.get("answer").and_then(first_answer).or_else(|| evs.iter().find_map(|(_, a)| *a));
        let Some(answer) = answer else {
            out.warn(Some(&id), loc, "no answer; skipped");
            continue;
        };
        let context = evs
            .iter()
            .map(|(text, _)| *text)
            .find(|text| contains_answer(text, answer, Language::Chinese).unwrap_or(false));
        let Some(context) = context else {
            out.warn(Some(&id), loc, "no evidence contains the answer; skipped");
            continue;
        };
        let record = QARecord {
            id: id.clone(),
            dataset_id: "webqa".into(),
            question: question.to_owned(),
            context: context.to_owned(),
            answer: answer.to_owned(),
            language: Language::Chinese,
            split: None,
        };
        out.admit(&mut seen, record, loc);
    }
    Ok(out)
}
