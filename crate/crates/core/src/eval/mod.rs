//! Scoring of model outputs: word-overlap recall, rule-based verdicts and
//! per-scenario / overall accuracy aggregation.
//!
//! A verdict scores +1 when correct, 0 when rejected and -1 when wrong, so
//! `wscore = c - w` over a scenario. Overall figures are the unweighted mean
//! of the per-scenario figures.

mod report;

pub use report::{render_report, RateRow, RateTable, ReportFormat};

use crate::scalar::Scalar;
use crate::scenarios::Scenario;
use crate::textops::{contains_answer, normalize, tokenize, Language};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("label has no tokens")]
    EmptyLabel,
    #[error("scenario {0} has no verdicts")]
    EmptyScenario(Scenario),
    #[error("scenario {0} appears more than once")]
    DuplicateScenario(Scenario),
    #[error("nothing to aggregate")]
    NoScenarios,
    #[error("recall list for {scenario} has {recalls} entries for {verdicts} verdicts")]
    RecallMismatch { scenario: Scenario, recalls: usize, verdicts: usize },
    #[error("rate table row {scenario}: {message}")]
    BadRate { scenario: Scenario, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Wrong,
    Correct,
    Rejected,
}

impl Verdict {
    pub fn score(self) -> i32 {
        match self {
            Verdict::Correct => 1,
            Verdict::Rejected => 0,
            Verdict::Wrong => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecallMode {
    /// Distinct label tokens found among the output tokens.
    #[default]
    Set,
    /// Label tokens matched with multiplicity.
    Multiset,
}

/// Fraction of label tokens that also occur in the output.
pub fn recall<T: Scalar>(output: &str, label: &str, language: Language, mode: RecallMode) -> Result<T, EvalError> {
    let label_tokens = tokenize(label, language);
    if label_tokens.is_empty() {
        return Err(EvalError::EmptyLabel);
    }
    let output_tokens = tokenize(output, language);
    let (hits, total) = match mode {
        RecallMode::Set => {
            let out: HashSet<&str> = output_tokens.iter().collect();
            let distinct = label_tokens.distinct();
            (distinct.iter().filter(|t| out.contains(*t)).count(), distinct.len())
        }
        RecallMode::Multiset => {
            let mut out: HashMap<&str, usize> = HashMap::new();
            for t in output_tokens.iter() {
                *out.entry(t).or_default() += 1;
            }
            let mut hits = 0;
            for t in label_tokens.iter() {
                if let Some(n) = out.get_mut(t).filter(|n| **n > 0) {
                    *n -= 1;
                    hits += 1;
                }
            }
            (hits, label_tokens.len())
        }
    };
    Ok(T::from_count(hits) / T::from_count(total))
}

pub const DEFAULT_REJECTION_PHRASES: [&str; 8] = [
    "not sufficient to answer",
    "don't have enough information",
    "do not have enough information",
    "cannot be answered",
    "unable to answer",
    "insufficient information",
    "无法回答",
    "信息不足",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleJudgeConfig {
    /// Matched against the output after normalization.
    pub rejection_phrases: Vec<String>,
}

impl Default for RuleJudgeConfig {
    fn default() -> Self {
        Self { rejection_phrases: DEFAULT_REJECTION_PHRASES.iter().map(|s| s.to_string()).collect() }
    }
}

/// Deterministic verdict: rejected if the output contains a rejection
/// phrase, correct if it contains the label, wrong otherwise. A label that
/// normalizes to nothing can never be matched and yields `Wrong`.
pub fn rule_judge(output: &str, label: &str, language: Language, config: &RuleJudgeConfig) -> Verdict {
    let out = normalize(output, language).text;
    let rejected = config.rejection_phrases.iter().any(|p| {
        let p = normalize(p, language).text;
        !p.is_empty() && out.contains(&p)
    });
    if rejected {
        Verdict::Rejected
    } else if contains_answer(output, label, language).unwrap_or(false) {
        Verdict::Correct
    } else {
        Verdict::Wrong
    }
}

/// Verdicts (and optionally per-output recall) collected for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcomes<T> {
    pub scenario: Scenario,
    pub verdicts: Vec<Verdict>,
    /// Empty, or one entry per verdict.
    pub recalls: Vec<T>,
}

impl<T> ScenarioOutcomes<T> {
    pub fn new(scenario: Scenario, verdicts: Vec<Verdict>) -> Self {
        Self { scenario, verdicts, recalls: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMetrics<T> {
    pub scenario: Scenario,
    pub n: usize,
    pub w: T,
    pub c: T,
    pub r: T,
    pub acc: T,
    pub wscore: T,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_recall: Option<T>,
}

impl<T: Scalar> ScenarioMetrics<T> {
    pub fn from_outcomes(outcomes: &ScenarioOutcomes<T>) -> Result<Self, EvalError> {
        let n = outcomes.verdicts.len();
        if n == 0 {
            return Err(EvalError::EmptyScenario(outcomes.scenario));
        }
        if !outcomes.recalls.is_empty() && outcomes.recalls.len() != n {
            return Err(EvalError::RecallMismatch {
                scenario: outcomes.scenario,
                recalls: outcomes.recalls.len(),
                verdicts: n,
            });
        }
        let count = |v: Verdict| outcomes.verdicts.iter().filter(|x| **x == v).count();
        let (nw, nc, nr) = (count(Verdict::Wrong), count(Verdict::Correct), count(Verdict::Rejected));
        let total = T::from_count(n);
        let frac = |k: usize| T::from_count(k) / total.clone();
        let mean_recall = (!outcomes.recalls.is_empty())
            .then(|| outcomes.recalls.iter().fold(T::zero(), |acc, x| acc + x.clone()) / total.clone());
        let wscore = (T::from_count(nc) - T::from_count(nw)) / total.clone();
        Ok(Self {
            scenario: outcomes.scenario,
            n,
            w: frac(nw),
            c: frac(nc),
            r: frac(nr),
            acc: frac(nc),
            wscore,
            mean_recall,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport<T> {
    pub model: String,
    pub judge: String,
    /// Ordered by scenario.
    pub scenarios: Vec<ScenarioMetrics<T>>,
    pub overall_acc: T,
    pub overall_wscore: T,
}

/// Per-scenario metrics plus their unweighted means.
pub fn aggregate<T: Scalar>(
    model: &str,
    judge: &str,
    groups: &[ScenarioOutcomes<T>],
) -> Result<EvalReport<T>, EvalError> {
    if groups.is_empty() {
        return Err(EvalError::NoScenarios);
    }
    let mut by_scenario = BTreeMap::new();
    for g in groups {
        let m = ScenarioMetrics::from_outcomes(g)?;
        if by_scenario.insert(g.scenario, m).is_some() {
            return Err(EvalError::DuplicateScenario(g.scenario));
        }
    }
    let scenarios: Vec<_> = by_scenario.into_values().collect();
    let k = T::from_count(scenarios.len());
    let mean = |f: fn(&ScenarioMetrics<T>) -> &T| scenarios.iter().fold(T::zero(), |a, m| a + f(m).clone()) / k.clone();
    let overall_acc = mean(|m| &m.acc);
    let overall_wscore = mean(|m| &m.wscore);
    Ok(EvalReport { model: model.to_string(), judge: judge.to_string(), scenarios, overall_acc, overall_wscore })
}

/// One model output to be judged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelOutput {
    pub sample_id: String,
    pub scenario: Scenario,
    pub model_output: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgedOutput {
    pub sample_id: String,
    pub scenario: Scenario,
    pub model_output: String,
    pub verdict: Verdict,
    pub recall: f64,
    /// Set when the model judge could not be parsed and the rule judge decided.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use proptest::prelude::*;

    use Verdict::{Correct as C, Rejected as R, Wrong as W};

    #[test]
    fn recall_examples() {
        let en = Language::English;
        assert_eq!(recall::<f64>("magdalen tower", "magdalen tower", en, RecallMode::Set).unwrap(), 1.0);
        assert_eq!(recall::<f64>("the magdalen tower of oxford", "magdalen tower", en, RecallMode::Set).unwrap(), 1.0);
        assert_eq!(recall::<f64>("radcliffe camera", "magdalen tower", en, RecallMode::Set).unwrap(), 0.0);
        assert_eq!(recall::<f64>("tower", "tower tower", en, RecallMode::Set).unwrap(), 1.0);
        assert_eq!(recall::<f64>("tower", "tower tower", en, RecallMode::Multiset).unwrap(), 0.5);
        assert_eq!(recall::<f64>("x", "!!", en, RecallMode::Set), Err(EvalError::EmptyLabel));
    }

    #[test]
    fn rule_judge_examples() {
        let cfg = RuleJudgeConfig::default();
        let en = Language::English;
        assert_eq!(rule_judge("Sorry, I don't have enough information", "magdalen tower", en, &cfg), R);
        assert_eq!(rule_judge("magdalen tower", "Magdalen Tower", en, &cfg), C);
        assert_eq!(rule_judge("radcliffe camera", "magdalen tower", en, &cfg), W);
        assert_eq!(rule_judge("抱歉，信息不足。", "北京", Language::Chinese, &cfg), R);
    }

    #[test]
    fn trivial_aggregate() {
        let rep = aggregate::<f64>("m", "rule", &[ScenarioOutcomes::new(Scenario::SS, vec![C, W, R, C])]).unwrap();
        assert_eq!(rep.scenarios[0].acc, 0.5);
        assert_eq!(rep.scenarios[0].wscore, 0.25);
        assert_eq!(rep.overall_wscore, 0.25);
    }

    #[test]
    fn aggregate_errors() {
        assert_eq!(aggregate::<f64>("m", "j", &[]), Err(EvalError::NoScenarios));
        let empty = ScenarioOutcomes::new(Scenario::MSConf, vec![]);
        assert_eq!(aggregate::<f64>("m", "j", &[empty]), Err(EvalError::EmptyScenario(Scenario::MSConf)));
        let dup = ScenarioOutcomes::new(Scenario::SS, vec![C]);
        assert_eq!(aggregate::<f64>("m", "j", &[dup.clone(), dup]), Err(EvalError::DuplicateScenario(Scenario::SS)));
    }

    #[test]
    fn exact_rationals_balance() {
        let rep = aggregate::<BigRational>("m", "j", &[ScenarioOutcomes::new(Scenario::SS, vec![C, W, R])]).unwrap();
        let m = &rep.scenarios[0];
        assert_eq!(m.w.clone() + m.c.clone() + m.r.clone(), BigRational::from_integer(1.into()));
        assert_eq!(m.wscore, BigRational::from_integer(0.into()));
    }

    fn verdict() -> impl Strategy<Value = Verdict> {
        prop_oneof![Just(W), Just(C), Just(R)]
    }

    fn scenario() -> impl Strategy<Value = Scenario> {
        prop_oneof![
            Just(Scenario::SS),
            Just(Scenario::SSIncomp),
            Just(Scenario::MSCons),
            Just(Scenario::MSIncons),
            Just(Scenario::MSConf)
        ]
    }

    proptest! {
        #[test]
        fn metric_identities(vs in prop::collection::vec(verdict(), 1..200)) {
            let m = ScenarioMetrics::from_outcomes(&ScenarioOutcomes::<f64>::new(Scenario::SS, vs.clone())).unwrap();
            prop_assert!((m.w + m.c + m.r - 1.0).abs() < 1e-9);
            prop_assert!((m.wscore - (m.acc - m.w)).abs() < 1e-9);
            prop_assert!((-1.0..=1.0).contains(&m.wscore));
            prop_assert!((0.0..=1.0).contains(&m.acc));
            let scored: i32 = vs.iter().map(|v| v.score()).sum();
            prop_assert!((m.wscore - scored as f64 / vs.len() as f64).abs() < 1e-12);
        }

        #[test]
        fn overall_is_order_invariant_macro_mean(
            groups in prop::collection::btree_map(scenario(), prop::collection::vec(verdict(), 1..50), 1..=5),
            rotate in 0usize..5,
        ) {
            let mut outcomes: Vec<_> = groups.into_iter().map(|(s, v)| ScenarioOutcomes::<f64>::new(s, v)).collect();
            let a = aggregate("m", "j", &outcomes).unwrap();
            let k = rotate % outcomes.len();
            outcomes.rotate_left(k);
            let b = aggregate("m", "j", &outcomes).unwrap();
            prop_assert_eq!(&a, &b);
            let mean = a.scenarios.iter().map(|m| m.acc).sum::<f64>() / a.scenarios.len() as f64;
            prop_assert!((a.overall_acc - mean).abs() < 1e-12);
        }

        #[test]
        fn recall_is_monotone(label in "[a-c ]{1,12}", out in "[a-d ]{0,12}", extra in "[a-d ]{0,8}") {
            prop_assume!(!tokenize(&label, Language::English).is_empty());
            for mode in [RecallMode::Set, RecallMode::Multiset] {
                let before: f64 = recall(&out, &label, Language::English, mode).unwrap();
                let after: f64 = recall(&format!("{out} {extra}"), &label, Language::English, mode).unwrap();
                prop_assert!(after >= before);
            }
        }

        #[test]
        fn output_equal_to_label_is_correct(label in "[a-z]{1,8}( [a-z]{1,8}){0,3}") {
            let cfg = RuleJudgeConfig::default();
            prop_assume!(rule_judge(&label, "zzzzzzzzz", Language::English, &cfg) != R);
            prop_assert_eq!(rule_judge(&label, &label, Language::English, &cfg), C);
        }
    }
}
