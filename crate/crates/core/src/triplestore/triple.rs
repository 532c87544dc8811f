use super::TripleError;
use serde::{Deserialize, Serialize};

pub const FIELD_SEPARATOR: &str = "|||";
pub const TRIPLE_JOINER: &str = ", ";

/// A `(head, relation, tail)` fact. Fields are trimmed, non-empty, and free
/// of the rendering separators (`|||`, `", "`) and line breaks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawTriple")]
pub struct Triple {
    head: String,
    relation: String,
    tail: String,
}

#[derive(Deserialize)]
struct RawTriple {
    head: String,
    relation: String,
    tail: String,
}

impl TryFrom<RawTriple> for Triple {
    type Error = TripleError;

    fn try_from(raw: RawTriple) -> Result<Self, Self::Error> {
        Triple::new(raw.head, raw.relation, raw.tail)
    }
}

fn check_field(name: &'static str, value: String) -> Result<String, TripleError> {
    let trimmed = value.trim();
    if trimmed.is_empty() {
        return Err(TripleError::InvalidField { field: name, value, reason: "empty" });
    }
    let reason = if trimmed.contains(FIELD_SEPARATOR) {
        Some("contains \"|||\"")
    } else if trimmed.contains(TRIPLE_JOINER) {
        Some("contains \", \"")
    } else if trimmed.contains(['\n', '\r']) {
        Some("contains a line break")
    } else {
        None
    };
    match reason {
        Some(reason) => Err(TripleError::InvalidField { field: name, value, reason }),
        None => Ok(trimmed.to_owned()),
    }
}

impl Triple {
    pub fn new(
        head: impl Into<String>,
        relation: impl Into<String>,
        tail: impl Into<String>,
    ) -> Result<Self, TripleError> {
        Ok(Self {
            head: check_field("head", head.into())?,
            relation: check_field("relation", relation.into())?,
            tail: check_field("tail", tail.into())?,
        })
    }

    pub fn head(&self) -> &str {
        &self.head
    }

    pub fn relation(&self) -> &str {
        &self.relation
    }

    pub fn tail(&self) -> &str {
        &self.tail
    }

    pub fn fields(&self) -> [&str; 3] {
        [&self.head, &self.relation, &self.tail]
    }

    /// `head ||| relation ||| tail`.
    pub fn render(&self) -> String {
        format!("{} {FIELD_SEPARATOR} {} {FIELD_SEPARATOR} {}", self.head, self.relation, self.tail)
    }
}

/// Renders triples joined by `", "`, the layout used in prompts.
pub fn render_triples(triples: &[Triple]) -> String {
    triples.iter().map(Triple::render).collect::<Vec<_>>().join(TRIPLE_JOINER)
}

/// Parses one line of rendered triples.
///
/// Splitting on `|||` yields `2m + 1` segments for `m` triples; each interior
/// joint segment `tail_k, head_{k+1}` is split at its last `", "`.
fn parse_line(line: &str, line_no: usize) -> Result<Vec<Triple>, TripleError> {
    let malformed =
        |reason: &str| TripleError::Malformed { line: line_no, fragment: line.to_owned(), reason: reason.into() };
    let segments: Vec<&str> = line.split(FIELD_SEPARATOR).collect();
    if segments.len() < 3 || segments.len().is_multiple_of(2) {
        return Err(malformed("field count is not a multiple of three"));
    }
    let mut fields: Vec<&str> = vec![segments[0]];
    for (k, seg) in segments[1..segments.len() - 1].iter().enumerate() {
        if k % 2 == 0 {
            fields.push(seg);
        } else {
            let (tail, head) =
                seg.rsplit_once(TRIPLE_JOINER).ok_or_else(|| malformed("missing \", \" between triples"))?;
            fields.push(tail);
            fields.push(head);
        }
    }
    fields.push(segments[segments.len() - 1]);
    fields.chunks(3).map(|f| Triple::new(f[0], f[1], f[2]).map_err(|e| malformed(&e.to_string()))).collect()
}

/// Strict parse: every non-blank line must hold one or more well-formed
/// triples. A trailing `,` on a line is ignored.
pub fn parse_triples(text: &str) -> Result<Vec<Triple>, TripleError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim().trim_end_matches(',').trim_end();
        if line.is_empty() {
            continue;
        }
        out.extend(parse_line(line, i + 1)?);
    }
    Ok(out)
}

/// Lenient parse: malformed lines are collected instead of aborting.
pub fn parse_triples_lenient(text: &str) -> (Vec<Triple>, Vec<TripleError>) {
    let mut good = Vec::new();
    let mut bad = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim().trim_end_matches(',').trim_end();
        if line.is_empty() {
            continue;
        }
        match parse_line(line, i + 1) {
            Ok(t) => good.extend(t),
            Err(e) => bad.push(e),
        }
    }
    (good, bad)
}
