use crate::eval::Verdict;
use crate::scenarios::ScenarioSample;
use crate::textops::{tokenize, Language};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Default refusal phrasings used as the decline answer.
pub const DEFAULT_REFUSAL_PHRASES: [&str; 2] = [
    "Provided context is not sufficient to answer the question.",
    "Sorry, I don't have enough information to answer the question.",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PairError {
    #[error("got {samples} samples, {verdicts} verdicts and {outputs} model outputs")]
    LengthMismatch { samples: usize, verdicts: usize, outputs: usize },
    #[error("refusal phrase list is empty")]
    NoRefusalPhrases,
    #[error("target {target} cannot be split exactly at {correct}:{incorrect}")]
    IndivisibleTarget { target: usize, correct: u32, incorrect: u32 },
    #[error("need {needed} {origin:?} pairs but only {available} are available")]
    Insufficient { origin: Origin, needed: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// The model answered correctly: gold label accepted, refusal declined.
    FromCorrect,
    /// The model answered wrongly: refusal accepted, model output declined.
    FromIncorrect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub origin: Origin,
}

/// Ratio of from-correct to from-incorrect pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Balance {
    pub correct: u32,
    pub incorrect: u32,
}

impl Default for Balance {
    fn default() -> Self {
        Self { correct: 1, incorrect: 1 }
    }
}

impl Balance {
    /// Per-origin counts for `target` pairs, if the split is exact.
    pub fn split(&self, target: usize) -> Option<(usize, usize)> {
        let total = (self.correct + self.incorrect) as usize;
        if total == 0 || !(target * self.correct as usize).is_multiple_of(total) {
            return None;
        }
        let correct = target * self.correct as usize / total;
        Some((correct, target - correct))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOptions {
    pub refusal_phrases: Vec<String>,
    pub target_n: usize,
    pub balance: Balance,
    pub seed: u64,
}

impl PairOptions {
    pub fn new(target_n: usize, seed: u64) -> Self {
        Self {
            refusal_phrases: DEFAULT_REFUSAL_PHRASES.iter().map(|s| s.to_string()).collect(),
            target_n,
            balance: Balance::default(),
            seed,
        }
    }
}

/// Builds chosen/rejected pairs from judged model outputs.
///
/// Correct verdicts yield [`Origin::FromCorrect`] pairs, wrong verdicts
/// [`Origin::FromIncorrect`] pairs, rejected verdicts nothing. Each side is
/// downsampled (seeded, without replacement) to its share of `target_n`, the
/// result shuffled, and refusal phrases assigned round-robin in output order.
pub fn build_pairs(
    samples: &[ScenarioSample],
    verdicts: &[Verdict],
    outputs: &[String],
    options: &PairOptions,
) -> Result<Vec<PreferencePair>, PairError> {
    if samples.len() != verdicts.len() || samples.len() != outputs.len() {
        return Err(PairError::LengthMismatch {
            samples: samples.len(),
            verdicts: verdicts.len(),
            outputs: outputs.len(),
        });
    }
    let phrases = &options.refusal_phrases;
    if phrases.is_empty() {
        return Err(PairError::NoRefusalPhrases);
    }
    let (want_correct, want_incorrect) =
        options.balance.split(options.target_n).ok_or(PairError::IndivisibleTarget {
            target: options.target_n,
            correct: options.balance.correct,
            incorrect: options.balance.incorrect,
        })?;

    let is_refusal = |text: &str| phrases.iter().any(|p| p == text);
    let mut correct = Vec::new();
    let mut incorrect = Vec::new();
    for (i, ((sample, verdict), output)) in samples.iter().zip(verdicts).zip(outputs).enumerate() {
        match verdict {
            Verdict::Correct if !is_refusal(&sample.gold_answer) => correct.push(i),
            Verdict::Wrong if !is_refusal(output) => incorrect.push(i),
            _ => {}
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut pick = |pool: &[usize], needed: usize, origin: Origin| -> Result<Vec<(Origin, usize)>, PairError> {
        if pool.len() < needed {
            return Err(PairError::Insufficient { origin, needed, available: pool.len() });
        }
        let mut chosen: Vec<usize> = index::sample(&mut rng, pool.len(), needed).into_iter().map(|k| pool[k]).collect();
        chosen.sort_unstable();
        Ok(chosen.into_iter().map(|i| (origin, i)).collect())
    };
    let mut selected = pick(&correct, want_correct, Origin::FromCorrect)?;
    selected.extend(pick(&incorrect, want_incorrect, Origin::FromIncorrect)?);
    selected.shuffle(&mut rng);

    Ok(selected
        .into_iter()
        .enumerate()
        .map(|(k, (origin, i))| {
            let refusal = phrases[k % phrases.len()].clone();
            let prompt = samples[i].render_prompt();
            match origin {
                Origin::FromCorrect => {
                    PreferencePair { prompt, chosen: samples[i].gold_answer.clone(), rejected: refusal, origin }
                }
                Origin::FromIncorrect => {
                    PreferencePair { prompt, chosen: refusal, rejected: outputs[i].clone(), origin }
                }
            }
        })
        .collect())
}

/// Maps text to integer ids for an external trainer.
pub trait TrainingTokenizer {
    fn encode(&self, text: &str) -> Vec<u32>;
}

/// Word-level vocabulary fitted on a pair set. Id 0 is reserved for unknown
/// tokens; the rest are assigned in sorted token order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordVocab {
    language: Language,
    ids: BTreeMap<String, u32>,
}

impl WordVocab {
    pub const UNKNOWN: u32 = 0;

    pub fn fit(pairs: &[PreferencePair], language: Language) -> Self {
        let mut ids = BTreeMap::new();
        for p in pairs {
            for text in [&p.prompt, &p.chosen, &p.rejected] {
                for tok in tokenize(text, language).into_tokens() {
                    ids.entry(tok).or_insert(0);
                }
            }
        }
        for (n, id) in ids.values_mut().enumerate() {
            *id = n as u32 + 1;
        }
        Self { language, ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

impl TrainingTokenizer for WordVocab {
    fn encode(&self, text: &str) -> Vec<u32> {
        tokenize(text, self.language).iter().map(|t| self.ids.get(t).copied().unwrap_or(Self::UNKNOWN)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedPair {
    pub prompt_ids: Vec<u32>,
    pub chosen_ids: Vec<u32>,
    pub rejected_ids: Vec<u32>,
    pub origin: Origin,
}

pub fn tokenize_for_training<T: TrainingTokenizer + ?Sized>(
    pairs: &[PreferencePair],
    tokenizer: &T,
) -> Vec<TokenizedPair> {
    pairs
        .iter()
        .map(|p| TokenizedPair {
            prompt_ids: tokenizer.encode(&p.prompt),
            chosen_ids: tokenizer.encode(&p.chosen),
            rejected_ids: tokenizer.encode(&p.rejected),
            origin: p.origin,
        })
        .collect()
}
