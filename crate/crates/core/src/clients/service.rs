use super::template::{FALSE_ANSWER, HEAD_ENTITIES, JUDGE, TRIPLE_EXTRACTION};
use super::{
    ChatRequest, ClientError, Completion, CompletionClient, RetryPolicy, SearchClient, SearchResult, TemplateSet,
};
use crate::eval::Verdict;
use crate::textops::{normalize, Language};
use crate::triplestore::{parse_triples, parse_triples_lenient, Triple, TripleError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Extraction {
    pub triples: Vec<Triple>,
    /// Lines dropped in lenient mode.
    pub warnings: Vec<TripleError>,
}

/// The model-backed operations used by dataset construction and evaluation.
pub struct LlmService<'a> {
    pub client: &'a dyn CompletionClient,
    pub retry: RetryPolicy,
    pub templates: &'a TemplateSet,
}

fn text_of(reply: Completion) -> Result<String, ClientError> {
    match reply {
        Completion::Text(t) => Ok(t),
        Completion::Refusal(r) => Err(ClientError::Refused(r)),
    }
}

fn require(value: &str, what: &'static str) -> Result<(), ClientError> {
    if value.trim().is_empty() {
        Err(ClientError::EmptyInput(what))
    } else {
        Ok(())
    }
}

impl<'a> LlmService<'a> {
    pub fn new(client: &'a dyn CompletionClient, retry: RetryPolicy, templates: &'a TemplateSet) -> Self {
        Self { client, retry, templates }
    }

    fn request(&self, template: &str, vars: &[(&str, &str)]) -> Result<ChatRequest, ClientError> {
        let t = self.templates.get(template)?;
        Ok(ChatRequest { template: template.to_string(), system: t.system.clone(), user: t.render(vars)? })
    }

    pub fn triple_request(&self, question: &str, context: &str) -> Result<ChatRequest, ClientError> {
        self.request(TRIPLE_EXTRACTION, &[("question", question), ("context", context)])
    }

    pub fn false_answer_request(&self, question: &str, answer: &str) -> Result<ChatRequest, ClientError> {
        self.request(FALSE_ANSWER, &[("question", question), ("answer", answer)])
    }

    pub fn head_entity_request(&self, question: &str) -> Result<ChatRequest, ClientError> {
        self.request(HEAD_ENTITIES, &[("question", question)])
    }

    pub fn judge_request(&self, question: &str, label: &str, output: &str) -> Result<ChatRequest, ClientError> {
        self.request(JUDGE, &[("question", question), ("label", label), ("output", output)])
    }

    fn ask(&self, request: &ChatRequest) -> Result<String, ClientError> {
        self.retry.run(|_| self.client.complete(request)).and_then(text_of)
    }

    pub fn extract_triples(&self, question: &str, context: &str, mode: ParseMode) -> Result<Extraction, ClientError> {
        require(context, "context")?;
        let reply = self.ask(&self.triple_request(question, context)?)?;
        match mode {
            ParseMode::Strict => {
                parse_triples(&reply).map(|triples| Extraction { triples, warnings: Vec::new() }).map_err(|e| match e {
                    TripleError::Malformed { line, fragment, reason } => {
                        ClientError::MalformedReply { line, fragment, reason }
                    }
                    other => {
                        ClientError::MalformedReply { line: 0, fragment: String::new(), reason: other.to_string() }
                    }
                })
            }
            ParseMode::Lenient => {
                let (triples, warnings) = parse_triples_lenient(&reply);
                for w in &warnings {
                    log::warn!("dropped extracted line: {w}");
                }
                Ok(Extraction { triples, warnings })
            }
        }
    }

    /// Asks for a plausible wrong answer. Every reply that is empty or equal
    /// to the gold answer after normalization costs one attempt.
    pub fn generate_false_answer(
        &self,
        question: &str,
        answer: &str,
        language: Language,
    ) -> Result<String, ClientError> {
        require(answer, "answer")?;
        let request = self.false_answer_request(question, answer)?;
        let gold = normalize(answer, language).text;
        let result = self.retry.run(|_| {
            let candidate = text_of(self.client.complete(&request)?)?;
            let candidate = candidate.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("").to_string();
            let norm = normalize(&candidate, language).text;
            if norm.is_empty() {
                Err(ClientError::InvalidCandidate("empty reply".into()))
            } else if norm == gold {
                Err(ClientError::InvalidCandidate(format!("{candidate:?} equals the gold answer")))
            } else {
                Ok(candidate)
            }
        });
        match result {
            Err(ClientError::InvalidCandidate(_)) => {
                Err(ClientError::CandidatesExhausted { attempts: self.retry.max_attempts.max(1) })
            }
            other => other,
        }
    }

    pub fn extract_head_entities(&self, question: &str) -> Result<Vec<String>, ClientError> {
        require(question, "question")?;
        let reply = self.ask(&self.head_entity_request(question)?)?;
        Ok(split_entities(&reply))
    }

    pub fn judge(&self, question: &str, label: &str, output: &str) -> Result<Verdict, ClientError> {
        require(question, "question")?;
        require(label, "label")?;
        require(output, "model output")?;
        let reply = self.ask(&self.judge_request(question, label, output)?)?;
        parse_verdict_tag(&reply).ok_or(ClientError::JudgeParse(reply))
    }
}

/// Splits a head-entity reply on `;`, `；` and newlines; duplicates dropped.
pub(crate) fn split_entities(reply: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for part in reply.split([';', '；', '\n']) {
        let part = part.trim();
        if !part.is_empty() && !out.iter().any(|p| p == part) {
            out.push(part.to_string());
        }
    }
    out
}

/// Reads the leading CORRECT / WRONG / REJECTED tag, ignoring case and any
/// leading markup such as `**` or `[`.
pub(crate) fn parse_verdict_tag(reply: &str) -> Option<Verdict> {
    let start = reply.trim_start_matches(|c: char| !c.is_alphanumeric());
    let word: String = start.chars().take_while(|c| c.is_ascii_alphabetic()).collect();
    match word.to_ascii_uppercase().as_str() {
        "CORRECT" => Some(Verdict::Correct),
        "WRONG" => Some(Verdict::Wrong),
        "REJECTED" => Some(Verdict::Rejected),
        _ => None,
    }
}

/// Joins the keywords into one query and returns up to `cap` results.
pub fn web_search(
    client: &dyn SearchClient,
    keywords: &[String],
    cap: usize,
    retry: RetryPolicy,
) -> Result<Vec<SearchResult>, ClientError> {
    if keywords.iter().all(|k| k.trim().is_empty()) {
        return Err(ClientError::EmptyInput("keywords"));
    }
    let query = keywords.iter().map(|k| k.trim()).filter(|k| !k.is_empty()).collect::<Vec<_>>().join(" ");
    let mut results = retry.run(|_| client.search(&query, cap))?;
    results.retain(|r| !r.snippet.trim().is_empty());
    results.truncate(cap);
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::mock::{FixtureEntry, MockCompletionClient, MockSearchClient, SearchFixture};
    use crate::eval::{rule_judge, RuleJudgeConfig};

    fn with_reply<T>(template: &str, reply: &str, f: impl FnOnce(&LlmService, &MockCompletionClient) -> T) -> T {
        let mock = MockCompletionClient::from_entries([FixtureEntry::any(template, reply)]);
        let templates = TemplateSet::default();
        let svc = LlmService::new(&mock, RetryPolicy::immediate(3), &templates);
        f(&svc, &mock)
    }

    const MITCHELL_Q: &str = "What is the Mitchell Tower designed to look like?";

    #[test]
    fn extracts_single_triple() {
        let ex =
            with_reply(TRIPLE_EXTRACTION, "Mitchell Tower ||| modeled after ||| Oxford's Magdalen Tower", |s, _| {
                s.extract_triples(
                    MITCHELL_Q,
                    "Mitchell Tower is modeled after Oxford's Magdalen Tower.",
                    ParseMode::Strict,
                )
                .unwrap()
            });
        assert_eq!(
            ex.triples,
            vec![Triple::new("Mitchell Tower", "modeled after", "Oxford's Magdalen Tower").unwrap()]
        );
        let empty = with_reply(TRIPLE_EXTRACTION, "", |s, _| s.extract_triples("q", "c", ParseMode::Strict).unwrap());
        assert!(empty.triples.is_empty());
    }

    #[test]
    fn malformed_line_strict_vs_lenient() {
        let reply = "a ||| b ||| c\nd ||| e ||| f\nnot a triple";
        let strict = with_reply(TRIPLE_EXTRACTION, reply, |s, _| s.extract_triples("q", "c", ParseMode::Strict));
        assert!(matches!(strict, Err(ClientError::MalformedReply { line: 3, .. })));
        let lenient =
            with_reply(TRIPLE_EXTRACTION, reply, |s, _| s.extract_triples("q", "c", ParseMode::Lenient).unwrap());
        assert_eq!(lenient.triples.len(), 2);
        assert_eq!(lenient.warnings.len(), 1);
        let empty_ctx = with_reply(TRIPLE_EXTRACTION, reply, |s, _| s.extract_triples("q", " ", ParseMode::Strict));
        assert_eq!(empty_ctx, Err(ClientError::EmptyInput("context")));
    }

    #[test]
    fn false_answer_accepts_distinct_candidate() {
        let got = with_reply(FALSE_ANSWER, "Oxford's Radcliffe Camera", |s, _| {
            s.generate_false_answer(MITCHELL_Q, "Oxford's Magdalen Tower", Language::English).unwrap()
        });
        assert_eq!(got, "Oxford's Radcliffe Camera");
    }

    #[test]
    fn false_answer_equal_to_gold_exhausts_attempts() {
        let (res, calls) = with_reply(FALSE_ANSWER, "oxford's magdalen tower.", |s, m| {
            (s.generate_false_answer(MITCHELL_Q, "Oxford's Magdalen Tower", Language::English), m.calls())
        });
        assert_eq!(res, Err(ClientError::CandidatesExhausted { attempts: 3 }));
        assert_eq!(calls, 3);
    }

    #[test]
    fn transport_retries_never_exceed_max_attempts() {
        for failures in 0..6 {
            let mock = MockCompletionClient::from_entries([FixtureEntry::any(JUDGE, "CORRECT")])
                .with_transient_failures(failures);
            let templates = TemplateSet::default();
            let svc = LlmService::new(&mock, RetryPolicy::immediate(3), &templates);
            let r = svc.judge("q", "l", "o");
            assert!(mock.calls() <= 3);
            assert_eq!(r.is_ok(), failures < 3);
        }
    }

    #[test]
    fn head_entities() {
        assert_eq!(
            with_reply(HEAD_ENTITIES, "Mitchell Tower", |s, _| s.extract_head_entities("q").unwrap()),
            ["Mitchell Tower"]
        );
        assert_eq!(with_reply(HEAD_ENTITIES, "A; B", |s, _| s.extract_head_entities("q").unwrap()), ["A", "B"]);
        assert_eq!(split_entities("甲；乙\n乙"), ["甲", "乙"]);
        assert!(with_reply(HEAD_ENTITIES, "", |s, _| s.extract_head_entities("q").unwrap()).is_empty());
    }

    #[test]
    fn judge_tags() {
        assert_eq!(with_reply(JUDGE, "CORRECT", |s, _| s.judge("q", "l", "o").unwrap()), Verdict::Correct);
        assert!(matches!(with_reply(JUDGE, "maybe", |s, _| s.judge("q", "l", "o")), Err(ClientError::JudgeParse(_))));
        assert_eq!(parse_verdict_tag("**rejected** - insufficient"), Some(Verdict::Rejected));
        assert_eq!(parse_verdict_tag("Wrong."), Some(Verdict::Wrong));
        assert_eq!(parse_verdict_tag("CORRECTLY"), None);
    }

    #[test]
    fn judge_fixture_of_twenty() {
        let cases: Vec<(String, String, Verdict)> = (0..20)
            .map(|i| {
                let label = format!("answer {i}");
                match i % 3 {
                    0 => (format!("It is answer {i}."), label, Verdict::Correct),
                    1 => (format!("It is number {}.", i + 100), label, Verdict::Wrong),
                    _ => (
                        "Provided context is not sufficient to answer the question.".to_string(),
                        label,
                        Verdict::Rejected,
                    ),
                }
            })
            .collect();
        let templates = TemplateSet::default();
        let probe = MockCompletionClient::default();
        let probe_svc = LlmService::new(&probe, RetryPolicy::immediate(1), &templates);
        let entries: Vec<FixtureEntry> = cases
            .iter()
            .map(|(out, label, v)| {
                let digest = probe_svc.judge_request("q", label, out).unwrap().digest();
                FixtureEntry::exact(JUDGE, &digest, &format!("{} - canned", format!("{v:?}").to_uppercase()))
            })
            .collect();
        let mock = MockCompletionClient::from_entries(entries);
        let svc = LlmService::new(&mock, RetryPolicy::immediate(1), &templates);
        let rules = RuleJudgeConfig::default();
        for (out, label, expected) in &cases {
            let got = svc.judge("q", label, out).unwrap();
            assert_eq!(got, *expected);
            assert_eq!(rule_judge(out, label, Language::English, &rules), *expected);
        }
    }

    #[test]
    fn web_search_order_and_empty_keywords() {
        let results: Vec<SearchResult> = (1..=3)
            .map(|i| SearchResult { title: format!("t{i}"), snippet: format!("s{i}"), url: format!("u{i}") })
            .collect();
        let mock = MockSearchClient::from_fixtures([SearchFixture {
            query: "chicago tower".into(),
            results: results.clone(),
        }]);
        let got = web_search(&mock, &["chicago".into(), "tower".into()], 10, RetryPolicy::immediate(1)).unwrap();
        assert_eq!(got, results);
        assert_eq!(web_search(&mock, &[], 10, RetryPolicy::immediate(1)), Err(ClientError::EmptyInput("keywords")));
    }
}
