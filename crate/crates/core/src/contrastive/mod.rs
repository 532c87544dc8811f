//! Preference-pair construction and the contrastive objective trained on it.

mod loss;
mod pairs;

pub use loss::{
    contrastive_loss, finite_difference_residual, pair_loss, LossError, LossResult, Reduction, Side, TokenLogProbs,
};
pub use pairs::{
    build_pairs, tokenize_for_training, Balance, Origin, PairError, PairOptions, PreferencePair, TokenizedPair,
    TrainingTokenizer, WordVocab, DEFAULT_REFUSAL_PHRASES,
};
