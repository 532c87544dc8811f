use super::{Provenance, Scenario, ScenarioSample, TermSource, MSINCONS_MAX_TRIPLES};
use crate::clients::{web_search, ClientError, LlmService, ParseMode, RetryPolicy, SearchClient};
use crate::corpus::QARecord;
use crate::textops::{
    contains_answer, find_answer, normalize, segment_sentences, tokenize, Language, TfIdfModel, TokenSeq,
};
use crate::triplestore::{render_triples, Triple, TripleIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

/// Why a record produced no sample. Skips are expected quality-filter
/// outcomes, unlike failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    TooFewSentences,
    EmptyRemainder,
    AnswerRemains,
    NoKeywords,
    EmptySearch,
    NoAnswerFreeResult,
    NoTriples,
    AnswerNotInTriples,
    NoRetrievalHits,
    MsconsUnavailable,
    FalseAnswerContainsGold,
    NothingToSubstitute,
    InvalidSubstitution,
    GoldRemains,
    Disabled,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SkipReason::TooFewSentences => "too few sentences",
            SkipReason::EmptyRemainder => "empty remainder",
            SkipReason::AnswerRemains => "answer remains after deletion",
            SkipReason::NoKeywords => "no keywords",
            SkipReason::EmptySearch => "search returned nothing",
            SkipReason::NoAnswerFreeResult => "no answer-free result",
            SkipReason::NoTriples => "no triples extracted",
            SkipReason::AnswerNotInTriples => "answer not in triples",
            SkipReason::NoRetrievalHits => "no retrieval hits",
            SkipReason::MsconsUnavailable => "no consistent-triple sample",
            SkipReason::FalseAnswerContainsGold => "false answer contains gold answer",
            SkipReason::NothingToSubstitute => "nothing to substitute",
            SkipReason::InvalidSubstitution => "substitution yields an invalid triple",
            SkipReason::GoldRemains => "gold answer remains in triples",
            SkipReason::Disabled => "scenario disabled",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BuildOutcome {
    Built(ScenarioSample),
    Skipped(SkipReason),
    Failed(String),
}

impl BuildOutcome {
    fn from_client(e: ClientError) -> Self {
        BuildOutcome::Failed(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncompMode {
    /// Deletion for English contexts with enough sentences, search otherwise.
    #[default]
    Auto,
    Deletion,
    Search,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntitySource {
    #[default]
    Question,
    HeadEntities,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub enabled: Vec<Scenario>,
    pub incomp_mode: IncompMode,
    /// Minimum sentence count for the deletion path.
    pub min_sentences: usize,
    /// TF-IDF keywords per search query.
    pub search_keywords: usize,
    pub search_cap: usize,
    pub parse_mode: ParseMode,
    pub entity_source: EntitySource,
    pub retrieval_limit: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            enabled: Scenario::ALL.to_vec(),
            incomp_mode: IncompMode::Auto,
            min_sentences: 2,
            search_keywords: 3,
            search_cap: 10,
            parse_mode: ParseMode::Strict,
            entity_source: EntitySource::Question,
            retrieval_limit: MSINCONS_MAX_TRIPLES,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(1..=MSINCONS_MAX_TRIPLES).contains(&self.retrieval_limit) {
            return Err(format!("retrieval_limit must be in 1..=10, got {}", self.retrieval_limit));
        }
        if self.min_sentences < 2 {
            return Err("min_sentences must be at least 2".into());
        }
        if self.search_keywords == 0 || self.search_cap == 0 {
            return Err("search_keywords and search_cap must be positive".into());
        }
        Ok(())
    }
}

/// Everything a builder may need besides the record.
pub struct BuildContext<'a> {
    pub config: &'a ScenarioConfig,
    pub llm: Option<LlmService<'a>>,
    pub search: Option<&'a dyn SearchClient>,
    pub search_retry: RetryPolicy,
    pub tfidf: Option<&'a TfIdfModel>,
    pub index: Option<&'a TripleIndex>,
}

fn sample_id(record: &QARecord, scenario: Scenario) -> String {
    format!("{}/{}", record.id, scenario)
}

fn base(record: &QARecord, scenario: Scenario) -> ScenarioSample {
    let mut s = ScenarioSample::new(
        sample_id(record, scenario),
        scenario,
        record.question.clone(),
        Some(record.context.clone()),
        record.answer.clone(),
        record.language,
    );
    s.source_id = record.id.clone();
    s
}

fn has(text: &str, answer: &str, language: Language) -> bool {
    contains_answer(text, answer, language).unwrap_or(false)
}

pub fn build_ss(record: &QARecord) -> ScenarioSample {
    let mut s = base(record, Scenario::SS);
    s.provenance.push(Provenance::Passthrough);
    s
}

/// Removes every sentence that contains the answer.
pub fn build_ssincomp_deletion(record: &QARecord, min_sentences: usize) -> BuildOutcome {
    let sentences = segment_sentences(&record.context);
    let non_blank = sentences.iter().filter(|r| !record.context[(*r).clone()].trim().is_empty()).count();
    if non_blank < min_sentences.max(2) {
        return BuildOutcome::Skipped(SkipReason::TooFewSentences);
    }
    let mut kept = String::new();
    let mut removed = Vec::new();
    for r in sentences {
        let text = &record.context[r.clone()];
        if has(text, &record.answer, record.language) {
            removed.push([r.start, r.end]);
        } else {
            kept.push_str(text);
        }
    }
    let kept = kept.trim();
    if kept.is_empty() {
        return BuildOutcome::Skipped(SkipReason::EmptyRemainder);
    }
    if has(kept, &record.answer, record.language) {
        return BuildOutcome::Skipped(SkipReason::AnswerRemains);
    }
    let mut s = base(record, Scenario::SSIncomp);
    s.context = Some(kept.to_string());
    s.provenance.push(Provenance::SentencesRemoved { removed });
    BuildOutcome::Built(s)
}

/// Replaces the context with the first answer-free search snippet.
pub fn build_ssincomp_search(
    record: &QARecord,
    search: &dyn SearchClient,
    retry: RetryPolicy,
    tfidf: &TfIdfModel,
    k: usize,
    cap: usize,
) -> BuildOutcome {
    let keywords = match tfidf.keywords(&record.question, k) {
        Ok(kw) if !kw.is_empty() => kw,
        _ => return BuildOutcome::Skipped(SkipReason::NoKeywords),
    };
    let results = match web_search(search, &keywords, cap, retry) {
        Ok(r) => r,
        Err(e) => return BuildOutcome::from_client(e),
    };
    if results.is_empty() {
        return BuildOutcome::Skipped(SkipReason::EmptySearch);
    }
    let Some((i, hit)) = results.iter().enumerate().find(|(_, r)| !has(&r.snippet, &record.answer, record.language))
    else {
        return BuildOutcome::Skipped(SkipReason::NoAnswerFreeResult);
    };
    let mut s = base(record, Scenario::SSIncomp);
    s.context = Some(hit.snippet.trim().to_string());
    s.provenance.push(Provenance::WebSearch { query: keywords.join(" "), result_index: i, url: hit.url.clone() });
    BuildOutcome::Built(s)
}

pub fn build_mscons(record: &QARecord, llm: &LlmService<'_>, mode: ParseMode) -> BuildOutcome {
    let extraction = match llm.extract_triples(&record.question, &record.context, mode) {
        Ok(x) => x,
        Err(e) => return BuildOutcome::from_client(e),
    };
    if extraction.triples.is_empty() {
        return BuildOutcome::Skipped(SkipReason::NoTriples);
    }
    if !has(&render_triples(&extraction.triples), &record.answer, record.language) {
        return BuildOutcome::Skipped(SkipReason::AnswerNotInTriples);
    }
    let digest = match llm.triple_request(&record.question, &record.context) {
        Ok(r) => r.digest(),
        Err(e) => return BuildOutcome::from_client(e),
    };
    let mut s = base(record, Scenario::MSCons);
    s.provenance.push(Provenance::TriplesExtracted { prompt_sha256: digest, count: extraction.triples.len() });
    s.triples = Some(extraction.triples);
    BuildOutcome::Built(s)
}

/// Retrieves answer-free triples from the local index.
pub fn build_msincons(
    record: &QARecord,
    index: &TripleIndex,
    source: EntitySource,
    llm: Option<&LlmService<'_>>,
    limit: usize,
) -> BuildOutcome {
    let question_terms = || tokenize(&record.question, record.language);
    let (terms, term_source) = match source {
        EntitySource::Question => (question_terms(), TermSource::Question),
        EntitySource::HeadEntities => {
            let Some(llm) = llm else {
                return BuildOutcome::Failed("head-entity terms need a completion client".into());
            };
            match llm.extract_head_entities(&record.question) {
                Ok(entities) if entities.is_empty() => (question_terms(), TermSource::QuestionFallback),
                Ok(entities) => {
                    let mut terms = TokenSeq::from_tokens(Vec::<String>::new(), record.language);
                    for e in &entities {
                        terms.extend(tokenize(e, record.language));
                    }
                    if terms.is_empty() {
                        (question_terms(), TermSource::QuestionFallback)
                    } else {
                        (terms, TermSource::HeadEntities)
                    }
                }
                Err(e) => return BuildOutcome::from_client(e),
            }
        }
    };
    let hits = match index.query(&terms, limit.min(MSINCONS_MAX_TRIPLES), Some(&record.answer)) {
        Ok(h) => h,
        Err(e) => return BuildOutcome::Failed(e.to_string()),
    };
    if hits.is_empty() {
        return BuildOutcome::Skipped(SkipReason::NoRetrievalHits);
    }
    let triples: Vec<Triple> = hits.iter().map(|h| index.triple(h.id).clone()).collect();
    // Exclusion is per triple; the joined rendering can still straddle the answer.
    if has(&render_triples(&triples), &record.answer, record.language) {
        return BuildOutcome::Skipped(SkipReason::AnswerRemains);
    }
    let mut s = base(record, Scenario::MSIncons);
    s.provenance.push(Provenance::TriplesRetrieved {
        terms: terms.distinct().into_iter().map(String::from).collect(),
        term_source,
        triple_ids: hits.iter().map(|h| h.id).collect(),
    });
    s.triples = Some(triples);
    BuildOutcome::Built(s)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Replaces whole-word normalized occurrences of `gold` in `field`.
/// Returns the new text and the number of replacements.
fn substitute(field: &str, gold: &str, replacement: &str, language: Language) -> (String, usize) {
    let ranges = find_answer(field, gold, language).unwrap_or_default();
    let mut out = String::with_capacity(field.len());
    let mut last = 0;
    let mut n = 0;
    for r in ranges {
        if language == Language::English {
            let before = field[..r.start].chars().next_back();
            let after = field[r.end..].chars().next();
            if before.is_some_and(is_word_char) || after.is_some_and(is_word_char) {
                continue;
            }
        }
        out.push_str(&field[last..r.start]);
        out.push_str(replacement);
        last = r.end;
        n += 1;
    }
    out.push_str(&field[last..]);
    (out, n)
}

/// Swaps the gold answer inside the consistent triples for a generated
/// false answer, leaving the context untouched.
pub fn build_msconf(record: &QARecord, mscons: &ScenarioSample, llm: &LlmService<'_>) -> BuildOutcome {
    let Some(triples) = mscons.triples.as_ref() else {
        return BuildOutcome::Skipped(SkipReason::MsconsUnavailable);
    };
    let lang = record.language;
    let false_answer = match llm.generate_false_answer(&record.question, &record.answer, lang) {
        Ok(f) => f,
        Err(e) => return BuildOutcome::from_client(e),
    };
    if normalize(&false_answer, lang).text.contains(&normalize(&record.answer, lang).text) {
        return BuildOutcome::Skipped(SkipReason::FalseAnswerContainsGold);
    }
    let mut occurrences = 0;
    let mut replaced = Vec::with_capacity(triples.len());
    for t in triples {
        let mut fields = [String::new(), String::new(), String::new()];
        for (slot, f) in fields.iter_mut().zip(t.fields()) {
            let (text, n) = substitute(f, &record.answer, &false_answer, lang);
            occurrences += n;
            *slot = text;
        }
        let [h, r, x] = fields;
        match Triple::new(h, r, x) {
            Ok(t) => replaced.push(t),
            Err(_) => return BuildOutcome::Skipped(SkipReason::InvalidSubstitution),
        }
    }
    if occurrences == 0 {
        return BuildOutcome::Skipped(SkipReason::NothingToSubstitute);
    }
    let rendered = render_triples(&replaced);
    if has(&rendered, &record.answer, lang) || !has(&rendered, &false_answer, lang) {
        return BuildOutcome::Skipped(SkipReason::GoldRemains);
    }
    let mut s = base(record, Scenario::MSConf);
    s.provenance.push(Provenance::FalseAnswerSubstituted {
        from_sample: mscons.id.clone(),
        false_answer: false_answer.clone(),
        occurrences,
    });
    s.triples = Some(replaced);
    s.false_answer = Some(false_answer);
    BuildOutcome::Built(s)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub source_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioCounts {
    pub input: usize,
    pub built: usize,
    pub skipped: usize,
    pub failed: usize,
    pub skip_reasons: BTreeMap<SkipReason, usize>,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub scenarios: BTreeMap<Scenario, ScenarioCounts>,
}

impl BuildReport {
    /// True when built + skipped + failed equals the input count everywhere.
    pub fn balanced(&self) -> bool {
        self.scenarios.values().all(|c| {
            c.built + c.skipped + c.failed == c.input
                && c.skip_reasons.values().sum::<usize>() == c.skipped
                && c.failures.len() == c.failed
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScenarioBuild {
    pub samples: BTreeMap<Scenario, Vec<ScenarioSample>>,
    pub report: BuildReport,
}

fn build_record(record: &QARecord, ctx: &BuildContext<'_>) -> Vec<(Scenario, BuildOutcome)> {
    let cfg = ctx.config;
    let on = |s: Scenario| cfg.enabled.contains(&s);
    let no_llm = || BuildOutcome::Failed("no completion client configured".into());
    let mut out = Vec::with_capacity(5);

    if on(Scenario::SS) {
        out.push((Scenario::SS, BuildOutcome::Built(build_ss(record))));
    }
    if on(Scenario::SSIncomp) {
        let sentences = segment_sentences(&record.context).len();
        let deletion = match cfg.incomp_mode {
            IncompMode::Deletion => true,
            IncompMode::Search => false,
            IncompMode::Auto => record.language == Language::English && sentences >= cfg.min_sentences,
        };
        let outcome = if deletion {
            build_ssincomp_deletion(record, cfg.min_sentences)
        } else {
            match (ctx.search, ctx.tfidf) {
                (Some(search), Some(tfidf)) => {
                    build_ssincomp_search(record, search, ctx.search_retry, tfidf, cfg.search_keywords, cfg.search_cap)
                }
                _ => BuildOutcome::Failed("search path needs a search client and a tf-idf model".into()),
            }
        };
        out.push((Scenario::SSIncomp, outcome));
    }
    let need_cons = on(Scenario::MSCons) || on(Scenario::MSConf);
    let cons = need_cons.then(|| match &ctx.llm {
        Some(llm) => build_mscons(record, llm, cfg.parse_mode),
        None => no_llm(),
    });
    if on(Scenario::MSCons) {
        out.push((Scenario::MSCons, cons.clone().expect("built above")));
    }
    if on(Scenario::MSIncons) {
        let outcome = match ctx.index {
            Some(index) => build_msincons(record, index, cfg.entity_source, ctx.llm.as_ref(), cfg.retrieval_limit),
            None => BuildOutcome::Failed("no triple index configured".into()),
        };
        out.push((Scenario::MSIncons, outcome));
    }
    if on(Scenario::MSConf) {
        let outcome = match (cons, &ctx.llm) {
            (Some(BuildOutcome::Built(c)), Some(llm)) => build_msconf(record, &c, llm),
            (Some(BuildOutcome::Failed(m)), _) => BuildOutcome::Failed(format!("consistent-triple step failed: {m}")),
            (_, None) => no_llm(),
            _ => BuildOutcome::Skipped(SkipReason::MsconsUnavailable),
        };
        out.push((Scenario::MSConf, outcome));
    }
    out
}

/// Builds every enabled scenario for every record. Records are processed in
/// parallel; outputs keep input order.
pub fn build_all(records: &[QARecord], ctx: &BuildContext<'_>) -> ScenarioBuild {
    let per_record: Vec<_> = records.par_iter().map(|r| build_record(r, ctx)).collect();
    let mut build = ScenarioBuild::default();
    for s in &ctx.config.enabled {
        build.samples.entry(*s).or_default();
        build.report.scenarios.entry(*s).or_default();
    }
    for (record, outcomes) in records.iter().zip(per_record) {
        for (scenario, outcome) in outcomes {
            let counts = build.report.scenarios.entry(scenario).or_default();
            counts.input += 1;
            match outcome {
                BuildOutcome::Built(s) => {
                    counts.built += 1;
                    build.samples.entry(scenario).or_default().push(s);
                }
                BuildOutcome::Skipped(reason) => {
                    counts.skipped += 1;
                    *counts.skip_reasons.entry(reason).or_default() += 1;
                }
                BuildOutcome::Failed(message) => {
                    log::warn!("{scenario} build failed for record {}: {message}", record.id);
                    counts.failed += 1;
                    counts.failures.push(Failure { source_id: record.id.clone(), message });
                }
            }
        }
    }
    build
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::mock::{FixtureEntry, MockCompletionClient, MockSearchClient, SearchFixture};
    use crate::clients::{SearchResult, TemplateSet, FALSE_ANSWER, HEAD_ENTITIES, TRIPLE_EXTRACTION};
    use crate::scenarios::validate;

    const CONTEXT: &str = "Mitchell Tower, for example, is modeled after Oxford's Magdalen Tower, and the university Commons, \
        Hutchinson Hall, replicates Christ Church Hall. The first buildings of the University of Chicago campus, which make up \
        what is now known as the Main Quadrangles, were part of a \"master plan\" conceived by two University of Chicago trustees \
        and plotted by Chicago architect Henry Ives Cobb. The Main Quadrangles consist of six quadrangles, each surrounded by \
        buildings, bordering one larger quadrangle. The buildings of the Main Quadrangles were designed by Cobb, Shepley, Rutan \
        and Coolidge, Holabird & Roche, and other architectural firms in a mixture of the Victorian Gothic and Collegiate Gothic \
        styles, patterned on the colleges of the University of Oxford.";

    fn mitchell() -> QARecord {
        QARecord {
            id: "squad-5733".into(),
            dataset_id: "squad".into(),
            question: "What is the Mitchell Tower designed to look like?".into(),
            context: CONTEXT.into(),
            answer: "Oxford's Magdalen Tower".into(),
            language: Language::English,
            split: None,
        }
    }

    fn llm_with<'a>(mock: &'a MockCompletionClient, templates: &'a TemplateSet) -> LlmService<'a> {
        LlmService::new(mock, RetryPolicy::immediate(2), templates)
    }

    #[test]
    fn ss_is_passthrough() {
        let r = mitchell();
        let s = build_ss(&r);
        assert_eq!(s.question, r.question);
        assert_eq!(s.context.as_deref(), Some(CONTEXT));
        assert!(s.triples.is_none());
    }

    #[test]
    fn deletion_keeps_answer_free_sentences() {
        let BuildOutcome::Built(s) = build_ssincomp_deletion(&mitchell(), 2) else { panic!() };
        let ctx = s.context.unwrap();
        assert!(ctx.starts_with("The first buildings"));
        assert!(ctx.ends_with("patterned on the colleges of the University of Oxford."));
        assert!(!contains_answer(&ctx, "Oxford's Magdalen Tower", Language::English).unwrap());
    }

    #[test]
    fn deletion_skips() {
        let mut r = mitchell();
        r.context = "Mitchell Tower is modeled after Oxford's Magdalen Tower.".into();
        assert_eq!(build_ssincomp_deletion(&r, 2), BuildOutcome::Skipped(SkipReason::TooFewSentences));
        r.context = "It copies Oxford's Magdalen Tower. Oxford's Magdalen Tower is old.".into();
        assert_eq!(build_ssincomp_deletion(&r, 2), BuildOutcome::Skipped(SkipReason::EmptyRemainder));
    }

    fn search_fixture(snippets: &[&str]) -> (MockSearchClient, TfIdfModel) {
        let tfidf = TfIdfModel::fit(&[CONTEXT], Language::English).unwrap();
        let query = tfidf.keywords(&mitchell().question, 3).unwrap().join(" ");
        let results = snippets
            .iter()
            .enumerate()
            .map(|(i, s)| SearchResult {
                title: format!("r{i}"),
                snippet: s.to_string(),
                url: format!("https://example.org/{i}"),
            })
            .collect();
        (MockSearchClient::from_fixtures([SearchFixture { query, results }]), tfidf)
    }

    #[test]
    fn search_takes_first_answer_free_snippet() {
        let (search, tfidf) =
            search_fixture(&["The tower copies Oxford's Magdalen Tower.", "Mitchell Tower has a carillon."]);
        let BuildOutcome::Built(s) =
            build_ssincomp_search(&mitchell(), &search, RetryPolicy::immediate(1), &tfidf, 3, 10)
        else {
            panic!()
        };
        assert_eq!(s.context.as_deref(), Some("Mitchell Tower has a carillon."));
        assert!(matches!(s.provenance[0], Provenance::WebSearch { result_index: 1, .. }));

        let (search, tfidf) = search_fixture(&["Oxford's Magdalen Tower."]);
        let out = build_ssincomp_search(&mitchell(), &search, RetryPolicy::immediate(1), &tfidf, 3, 10);
        assert_eq!(out, BuildOutcome::Skipped(SkipReason::NoAnswerFreeResult));
        let (search, tfidf) = search_fixture(&[]);
        let out = build_ssincomp_search(&mitchell(), &search, RetryPolicy::immediate(1), &tfidf, 3, 10);
        assert_eq!(out, BuildOutcome::Skipped(SkipReason::EmptySearch));
    }

    #[test]
    fn mscons_and_msconf_follow_the_table_example() {
        let mock = MockCompletionClient::from_entries([
            FixtureEntry::any(TRIPLE_EXTRACTION, "Mitchell Tower ||| modeled after ||| Oxford's Magdalen Tower\nHutchinson Hall ||| replicates ||| Christ Church Hall"),
            FixtureEntry::any(FALSE_ANSWER, "Oxford's Radcliffe Camera"),
        ]);
        let templates = TemplateSet::default();
        let llm = llm_with(&mock, &templates);
        let BuildOutcome::Built(cons) = build_mscons(&mitchell(), &llm, ParseMode::Strict) else { panic!() };
        assert_eq!(
            cons.triples.as_ref().unwrap()[0].render(),
            "Mitchell Tower ||| modeled after ||| Oxford's Magdalen Tower"
        );
        let BuildOutcome::Built(conf) = build_msconf(&mitchell(), &cons, &llm) else { panic!() };
        assert_eq!(
            conf.triples.as_ref().unwrap()[0].render(),
            "Mitchell Tower ||| modeled after ||| Oxford's Radcliffe Camera"
        );
        assert_eq!(conf.triples.as_ref().unwrap()[1], cons.triples.as_ref().unwrap()[1]);
        assert_eq!(conf.context.as_deref(), Some(CONTEXT));
        assert!(validate(&[cons, conf]).is_empty());
    }

    #[test]
    fn mscons_skips_answer_free_extraction() {
        let mock = MockCompletionClient::from_entries([FixtureEntry::any(
            TRIPLE_EXTRACTION,
            "Hutchinson Hall ||| replicates ||| Christ Church Hall",
        )]);
        let templates = TemplateSet::default();
        assert_eq!(
            build_mscons(&mitchell(), &llm_with(&mock, &templates), ParseMode::Strict),
            BuildOutcome::Skipped(SkipReason::AnswerNotInTriples)
        );
    }

    #[test]
    fn substitution_respects_word_boundaries() {
        assert_eq!(substitute("the tower and towers", "tower", "X", Language::English), ("the X and towers".into(), 1));
        assert_eq!(substitute("Tower, tower", "tower", "X", Language::English), ("X, X".into(), 2));
        assert_eq!(substitute("北京大学", "北京", "上海", Language::Chinese), ("上海大学".into(), 1));
    }

    #[test]
    fn msconf_skips_when_nothing_to_substitute() {
        let mock = MockCompletionClient::from_entries([FixtureEntry::any(FALSE_ANSWER, "Radcliffe Camera")]);
        let templates = TemplateSet::default();
        let mut cons = base(&mitchell(), Scenario::MSCons);
        cons.triples = Some(vec![Triple::new("Mitchell Tower", "modeled after", "Oxford's Magdalen Towers").unwrap()]);
        let mut r = mitchell();
        r.answer = "Magdalen Tower".into();
        assert_eq!(
            build_msconf(&r, &cons, &llm_with(&mock, &templates)),
            BuildOutcome::Skipped(SkipReason::NothingToSubstitute)
        );
    }

    fn movie_index() -> TripleIndex {
        let triples = [
            ("The Deadly Tower", "directed by", "Jerry Jameson"),
            ("The Deadly Tower", "release year", "1975"),
            ("Magdalen Tower", "located in", "Oxford"),
            ("Casablanca", "directed by", "Michael Curtiz"),
        ]
        .iter()
        .map(|(h, r, t)| Triple::new(*h, *r, *t).unwrap())
        .collect();
        TripleIndex::build(triples, Language::English).unwrap()
    }

    #[test]
    fn msincons_retrieves_unrelated_triples() {
        let BuildOutcome::Built(s) = build_msincons(&mitchell(), &movie_index(), EntitySource::Question, None, 10)
        else {
            panic!()
        };
        let rendered: Vec<String> = s.triples.as_ref().unwrap().iter().map(Triple::render).collect();
        assert!(rendered.contains(&"The Deadly Tower ||| directed by ||| Jerry Jameson".to_string()));
        assert!(validate(&[s]).is_empty());

        let mut r = mitchell();
        r.question = "Quelle heure est-il?".into();
        assert_eq!(
            build_msincons(&r, &movie_index(), EntitySource::Question, None, 10),
            BuildOutcome::Skipped(SkipReason::NoRetrievalHits)
        );
    }

    #[test]
    fn msincons_head_entity_fallback() {
        let templates = TemplateSet::default();
        let empty = MockCompletionClient::from_entries([FixtureEntry::any(HEAD_ENTITIES, "")]);
        let BuildOutcome::Built(s) = build_msincons(
            &mitchell(),
            &movie_index(),
            EntitySource::HeadEntities,
            Some(&llm_with(&empty, &templates)),
            10,
        ) else {
            panic!()
        };
        assert!(matches!(
            &s.provenance[0],
            Provenance::TriplesRetrieved { term_source: TermSource::QuestionFallback, .. }
        ));
        let named = MockCompletionClient::from_entries([FixtureEntry::any(HEAD_ENTITIES, "Casablanca")]);
        let BuildOutcome::Built(s) = build_msincons(
            &mitchell(),
            &movie_index(),
            EntitySource::HeadEntities,
            Some(&llm_with(&named, &templates)),
            10,
        ) else {
            panic!()
        };
        assert_eq!(s.triples.unwrap()[0].head(), "Casablanca");
    }

    #[test]
    fn report_balances_with_failures() {
        let mock = MockCompletionClient::default();
        let templates = TemplateSet::default();
        let config = ScenarioConfig::default();
        let index = movie_index();
        let ctx = BuildContext {
            config: &config,
            llm: Some(llm_with(&mock, &templates)),
            search: None,
            search_retry: RetryPolicy::immediate(1),
            tfidf: None,
            index: Some(&index),
        };
        let records = vec![mitchell(); 3];
        let build = build_all(&records, &ctx);
        assert!(build.report.balanced());
        assert_eq!(build.report.scenarios[&Scenario::SS].built, 3);
        assert_eq!(build.report.scenarios[&Scenario::MSCons].failed, 3);
        assert_eq!(build.report.scenarios[&Scenario::MSConf].failed, 3);
    }
}
