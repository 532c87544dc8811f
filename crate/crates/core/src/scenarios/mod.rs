//! The five evaluation scenarios built from reading-comprehension records.
//!
//! | scenario  | context                      | triples                               |
//! |-----------|------------------------------|---------------------------------------|
//! | SS        | original                     | none                                  |
//! | SSIncomp  | answer-free (deleted/search) | none                                  |
//! | MSCons    | original                     | extracted, contain the answer         |
//! | MSIncons  | original                     | retrieved, answer-free, at most 10    |
//! | MSConf    | original                     | extracted, answer replaced by a false one |

mod build;
mod review;

pub use build::{
    build_all, build_msconf, build_mscons, build_msincons, build_ss, build_ssincomp_deletion, build_ssincomp_search,
    BuildContext, BuildOutcome, BuildReport, EntitySource, Failure, IncompMode, ScenarioBuild, ScenarioConfig,
    ScenarioCounts, SkipReason,
};
pub use review::{
    export_review, import_review, read_review_tsv, write_review_tsv, ReviewError, ReviewRow, ReviewVerdict,
};

use crate::textops::{contains_answer, Language};
use crate::triplestore::{render_triples, Triple};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    SS,
    SSIncomp,
    MSCons,
    MSIncons,
    MSConf,
}

impl Scenario {
    pub const ALL: [Scenario; 5] =
        [Scenario::SS, Scenario::SSIncomp, Scenario::MSCons, Scenario::MSIncons, Scenario::MSConf];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::SS => "SS",
            Scenario::SSIncomp => "SSIncomp",
            Scenario::MSCons => "MSCons",
            Scenario::MSIncons => "MSIncons",
            Scenario::MSConf => "MSConf",
        }
    }

    pub fn has_triples(self) -> bool {
        matches!(self, Scenario::MSCons | Scenario::MSIncons | Scenario::MSConf)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = String;

    /// Case-insensitive; also accepts the hyphenated forms (`ss-incomp`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s.chars().filter(|c| *c != '-' && *c != '_').collect::<String>().to_ascii_lowercase();
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str().to_ascii_lowercase() == key)
            .ok_or_else(|| format!("unknown scenario {s:?} (expected one of SS, SSIncomp, MSCons, MSIncons, MSConf)"))
    }
}

/// Where MSIncons query terms came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermSource {
    Question,
    HeadEntities,
    /// Entity extraction returned nothing; question tokens used instead.
    QuestionFallback,
}

/// One build step, recorded with enough detail to replay it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum Provenance {
    Passthrough,
    SentencesRemoved { removed: Vec<[usize; 2]> },
    WebSearch { query: String, result_index: usize, url: String },
    TriplesExtracted { prompt_sha256: String, count: usize },
    TriplesRetrieved { terms: Vec<String>, term_source: TermSource, triple_ids: Vec<u32> },
    FalseAnswerSubstituted { from_sample: String, false_answer: String, occurrences: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioSample {
    pub id: String,
    pub source_id: String,
    pub scenario: Scenario,
    pub question: String,
    #[serde(default)]
    pub context: Option<String>,
    #[serde(default)]
    pub triples: Option<Vec<Triple>>,
    pub gold_answer: String,
    #[serde(default)]
    pub false_answer: Option<String>,
    pub language: Language,
    #[serde(default)]
    pub provenance: Vec<Provenance>,
}

impl ScenarioSample {
    /// A triple-free sample whose source id equals its id.
    pub fn new(
        id: impl Into<String>,
        scenario: Scenario,
        question: impl Into<String>,
        context: Option<String>,
        gold_answer: impl Into<String>,
        language: Language,
    ) -> Self {
        let id = id.into();
        Self {
            source_id: id.clone(),
            id,
            scenario,
            question: question.into(),
            context,
            triples: None,
            gold_answer: gold_answer.into(),
            false_answer: None,
            language,
            provenance: Vec::new(),
        }
    }

    /// The model input: context, then triples, then the question.
    pub fn render_prompt(&self) -> String {
        let (c, t, q) = match self.language {
            Language::English => ("Context: ", "Triples: ", "Question: "),
            Language::Chinese => ("背景：", "三元组：", "问题："),
        };
        let mut parts = Vec::new();
        if let Some(ctx) = &self.context {
            parts.push(format!("{c}{ctx}"));
        }
        if let Some(triples) = &self.triples {
            parts.push(format!("{t}{}", render_triples(triples)));
        }
        parts.push(format!("{q}{}", self.question));
        parts.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub sample_id: String,
    pub message: String,
}

pub const MSINCONS_MAX_TRIPLES: usize = 10;

/// Re-checks every scenario invariant. An empty result means the set is
/// consistent.
pub fn validate(samples: &[ScenarioSample]) -> Vec<Violation> {
    let mut out = Vec::new();
    for s in samples {
        let mut fail = |m: &str| out.push(Violation { sample_id: s.id.clone(), message: m.to_string() });
        let has = |text: &str, needle: &str| contains_answer(text, needle, s.language).unwrap_or(false);
        match (&s.triples, s.scenario.has_triples()) {
            (Some(_), false) => fail("triples present in a single-source scenario"),
            (None, true) => fail("triples missing"),
            (Some(t), true) if t.is_empty() => fail("triple list is empty"),
            _ => {}
        }
        if contains_answer("", &s.gold_answer, s.language).is_err() {
            fail("gold answer is empty");
            continue;
        }
        let rendered = s.triples.as_deref().map(render_triples).unwrap_or_default();
        match s.scenario {
            Scenario::SS => {
                if s.context.is_none() {
                    fail("context missing");
                }
            }
            Scenario::SSIncomp => match &s.context {
                Some(c) if c.trim().is_empty() => fail("context is empty"),
                Some(c) if has(c, &s.gold_answer) => fail("context still contains the answer"),
                None => fail("context missing"),
                _ => {}
            },
            Scenario::MSCons => {
                if !has(&rendered, &s.gold_answer) {
                    fail("answer not found in triples");
                }
            }
            Scenario::MSIncons => {
                if has(&rendered, &s.gold_answer) {
                    fail("answer found in triples");
                }
                if s.triples.as_ref().is_some_and(|t| t.len() > MSINCONS_MAX_TRIPLES) {
                    fail("more than 10 triples");
                }
            }
            Scenario::MSConf => match &s.false_answer {
                None => fail("false answer missing"),
                Some(f) => {
                    if !has(&rendered, f) {
                        fail("false answer not found in triples");
                    }
                    if has(&rendered, &s.gold_answer) {
                        fail("gold answer still present in triples");
                    }
                }
            },
        }
        if s.false_answer.is_some() && s.scenario != Scenario::MSConf {
            fail("false answer on a non-conflict sample");
        }
    }
    out
}
