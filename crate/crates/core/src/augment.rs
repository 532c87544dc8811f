//! Training-data augmentation: span masking and adjacent-word swapping.
//!
//! Every transform records the operations it applied so that
//! [`replay`] can reproduce the augmented context from the original.

use crate::corpus::QARecord;
use crate::textops::{find_answer, segment_spans, Language, SpanSegmentation};
use log::warn;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use std::ops::Range;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AugmentError {
    #[error("context has no spans")]
    EmptyContext,
    #[error("invalid augment config: {0}")]
    InvalidConfig(String),
}

/// How the answer-span mask rate is applied across a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMaskMode {
    /// Independent draw per answer-bearing span.
    #[default]
    Bernoulli,
    /// Exactly `round(rate * M)` of the M records with a locatable answer
    /// lose their answer spans.
    Quota,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    #[serde(default = "AugmentConfig::default_answer_rate")]
    pub answer_span_mask_rate: f64,
    #[serde(default = "AugmentConfig::default_other_rate")]
    pub other_span_mask_rate: f64,
    #[serde(default = "AugmentConfig::default_true")]
    pub swap_enabled: bool,
    #[serde(default = "AugmentConfig::default_window")]
    pub swap_window: usize,
    #[serde(default)]
    pub answer_mask_mode: AnswerMaskMode,
    pub seed: u64,
}

impl AugmentConfig {
    fn default_answer_rate() -> f64 {
        0.4
    }
    fn default_other_rate() -> f64 {
        0.1
    }
    fn default_true() -> bool {
        true
    }
    fn default_window() -> usize {
        1
    }

    pub fn with_seed(seed: u64) -> Self {
        Self {
            answer_span_mask_rate: Self::default_answer_rate(),
            other_span_mask_rate: Self::default_other_rate(),
            swap_enabled: true,
            swap_window: 1,
            answer_mask_mode: AnswerMaskMode::Bernoulli,
            seed,
        }
    }

    /// Zero mask rates and no swap: augmentation is the identity.
    pub fn identity(seed: u64) -> Self {
        Self { answer_span_mask_rate: 0.0, other_span_mask_rate: 0.0, swap_enabled: false, ..Self::with_seed(seed) }
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        for (name, rate) in
            [("answer_span_mask_rate", self.answer_span_mask_rate), ("other_span_mask_rate", self.other_span_mask_rate)]
        {
            if !(0.0..=1.0).contains(&rate) {
                return Err(AugmentError::InvalidConfig(format!("{name} = {rate} is outside [0, 1]")));
            }
        }
        if self.swap_window == 0 {
            return Err(AugmentError::InvalidConfig("swap_window must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AppliedOp {
    /// Span `span` of the current segmentation was removed with its trailing
    /// delimiters. Consecutive mask ops refer to one segmentation.
    Mask { span: usize },
    /// In span `span`, the `window` words before word boundary `position`
    /// were exchanged with the `window` words after it.
    Swap { span: usize, position: usize, window: usize },
}

/// Result of a single transform.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Augmented {
    pub context: String,
    pub applied_ops: Vec<AppliedOp>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedExample {
    pub id: String,
    pub context_augmented: String,
    pub applied_ops: Vec<AppliedOp>,
}

fn rebuild(seg: &SpanSegmentation, removed: &[bool]) -> String {
    let mut out = String::from(seg.prefix());
    for (i, &gone) in removed.iter().enumerate().take(seg.len()) {
        if !gone {
            out.push_str(seg.span_text(i));
            out.push_str(seg.trailing(i));
        }
    }
    out
}

/// Indices of spans overlapping any normalized occurrence of the answer.
fn answer_spans(seg: &SpanSegmentation, answer: &str, language: Language) -> HashSet<usize> {
    let hits = find_answer(&seg.source, answer, language).unwrap_or_default();
    seg.spans
        .iter()
        .enumerate()
        .filter(|(_, s)| hits.iter().any(|h| h.start < s.end && s.start < h.end))
        .map(|(i, _)| i)
        .collect()
}

/// Removes spans at random: answer-bearing spans with
/// `answer_span_mask_rate`, the rest with `other_span_mask_rate`. At least one
/// span survives; if every span is drawn, the longest is kept.
pub fn mask_spans<R: Rng + ?Sized>(
    context: &str,
    answer: &str,
    language: Language,
    config: &AugmentConfig,
    rng: &mut R,
) -> Result<Augmented, AugmentError> {
    mask_spans_with(context, answer, language, config, None, rng)
}

fn mask_spans_with<R: Rng + ?Sized>(
    context: &str,
    answer: &str,
    language: Language,
    config: &AugmentConfig,
    answer_decision: Option<bool>,
    rng: &mut R,
) -> Result<Augmented, AugmentError> {
    let seg = segment_spans(context);
    if seg.is_empty() {
        return Err(AugmentError::EmptyContext);
    }
    let located = answer_spans(&seg, answer, language);
    let mut removed: Vec<bool> = (0..seg.len())
        .map(|i| {
            let is_answer = located.contains(&i);
            let rate = if is_answer { config.answer_span_mask_rate } else { config.other_span_mask_rate };
            let draw = rng.gen::<f64>() < rate;
            match answer_decision {
                Some(forced) if is_answer => forced,
                _ => draw,
            }
        })
        .collect();
    if removed.iter().all(|r| *r) {
        let longest = (0..seg.len())
            .max_by(|&a, &b| seg.spans[a].len().cmp(&seg.spans[b].len()).then(b.cmp(&a)))
            .expect("non-empty");
        removed[longest] = false;
    }
    let applied_ops = (0..seg.len()).filter(|&i| removed[i]).map(|span| AppliedOp::Mask { span }).collect();
    Ok(Augmented { context: rebuild(&seg, &removed), applied_ops })
}

/// Byte ranges of whitespace-separated words inside `text`.
fn word_ranges(text: &str) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (false, None) => start = Some(i),
            (true, Some(s)) => {
                out.push(s..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(s..text.len());
    }
    out
}

fn swap_in_span(span: &str, position: usize, window: usize) -> String {
    let words = word_ranges(span);
    let mut order: Vec<usize> = (0..words.len()).collect();
    order[position - window..position + window].rotate_left(window);
    let mut out = String::with_capacity(span.len());
    out.push_str(&span[..words[0].start]);
    for (slot, &w) in order.iter().enumerate() {
        out.push_str(&span[words[w].clone()]);
        let gap_end = words.get(slot + 1).map_or(span.len(), |r| r.start);
        out.push_str(&span[words[slot].end..gap_end]);
    }
    out
}

fn apply_swap(context: &str, span: usize, position: usize, window: usize) -> String {
    let seg = segment_spans(context);
    let range = seg.spans[span].clone();
    let mut out = String::with_capacity(context.len());
    out.push_str(&context[..range.start]);
    out.push_str(&swap_in_span(&context[range.clone()], position, window));
    out.push_str(&context[range.end..]);
    out
}

/// Picks one span with at least `2 * swap_window` words uniformly, then one
/// interior word boundary uniformly, and exchanges the `swap_window` words on
/// either side. With no eligible span the context is returned unchanged and
/// `applied_ops` is empty.
pub fn swap_words<R: Rng + ?Sized>(context: &str, config: &AugmentConfig, rng: &mut R) -> Augmented {
    let window = config.swap_window.max(1);
    let seg = segment_spans(context);
    let eligible: Vec<(usize, usize)> =
        (0..seg.len()).map(|i| (i, word_ranges(seg.span_text(i)).len())).filter(|&(_, n)| n >= 2 * window).collect();
    if eligible.is_empty() {
        return Augmented { context: context.to_owned(), applied_ops: Vec::new() };
    }
    let (span, n) = eligible[rng.gen_range(0..eligible.len())];
    let position = rng.gen_range(window..=n - window);
    Augmented {
        context: apply_swap(context, span, position, window),
        applied_ops: vec![AppliedOp::Swap { span, position, window }],
    }
}

/// Re-applies recorded operations to the original context.
pub fn replay(original: &str, ops: &[AppliedOp]) -> String {
    let mut text = original.to_owned();
    let mut i = 0;
    while i < ops.len() {
        match ops[i] {
            AppliedOp::Mask { .. } => {
                let seg = segment_spans(&text);
                let mut removed = vec![false; seg.len()];
                while let Some(AppliedOp::Mask { span }) = ops.get(i) {
                    if let Some(slot) = removed.get_mut(*span) {
                        *slot = true;
                    }
                    i += 1;
                }
                text = rebuild(&seg, &removed);
            }
            AppliedOp::Swap { span, position, window } => {
                text = apply_swap(&text, span, position, window);
                i += 1;
            }
        }
    }
    text
}

/// Per-record RNG stream derived from `(seed, record id)`.
pub fn record_rng(seed: u64, id: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Masks then (optionally) swaps every record. Output order equals input
/// order; a record whose transform fails is emitted untransformed.
pub fn build_training_set(records: &[QARecord], config: &AugmentConfig) -> Result<Vec<AugmentedExample>, AugmentError> {
    config.validate()?;
    let decisions: Vec<Option<bool>> = match config.answer_mask_mode {
        AnswerMaskMode::Bernoulli => vec![None; records.len()],
        AnswerMaskMode::Quota => {
            let locatable: Vec<usize> = (0..records.len())
                .filter(|&i| {
                    let r = &records[i];
                    !find_answer(&r.context, &r.answer, r.language).unwrap_or_default().is_empty()
                })
                .collect();
            let quota = (config.answer_span_mask_rate * locatable.len() as f64).round() as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let picked: HashSet<usize> =
                index::sample(&mut rng, locatable.len(), quota).into_iter().map(|k| locatable[k]).collect();
            (0..records.len()).map(|i| Some(picked.contains(&i))).collect()
        }
    };

    Ok(records
        .par_iter()
        .zip(decisions.par_iter())
        .map(|(record, decision)| {
            let mut rng = record_rng(config.seed, &record.id);
            let masked =
                match mask_spans_with(&record.context, &record.answer, record.language, config, *decision, &mut rng) {
                    Ok(m) => m,
                    Err(e) => {
                        warn!("{}: augmentation skipped: {e}", record.id);
                        return AugmentedExample {
                            id: record.id.clone(),
                            context_augmented: record.context.clone(),
                            applied_ops: Vec::new(),
                        };
                    }
                };
            let mut ops = masked.applied_ops;
            let mut context = masked.context;
            if config.swap_enabled {
                let swapped = swap_words(&context, config, &mut rng);
                ops.extend(swapped.applied_ops);
                context = swapped.context;
            }
            AugmentedExample { id: record.id.clone(), context_augmented: context, applied_ops: ops }
        })
        .collect())
}
