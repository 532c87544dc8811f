//! Building robustness-evaluation QA datasets from reading-comprehension
//! corpora, augmenting training contexts, scoring model outputs, and the
//! pairwise contrastive objective used to teach a model to decline when its
//! sources are insufficient.
//!
//! Loss and metric code is generic over [`Scalar`]; the aliases below fix
//! the usual choices.

pub mod augment;
pub mod clients;
pub mod contrastive;
pub mod corpus;
pub mod eval;
pub mod pipeline;
pub mod scalar;
pub mod scenarios;
pub mod synth;
pub mod textops;
pub mod triplestore;

pub use scalar::Scalar;

/// Exact rational scalar.
pub type Exact = num_rational::BigRational;

pub type TokenLogProbs = contrastive::TokenLogProbs<f64>;
pub type TokenLogProbsF32 = contrastive::TokenLogProbs<f32>;
pub type TokenLogProbsExact = contrastive::TokenLogProbs<Exact>;

pub type LossResult = contrastive::LossResult<f64>;
pub type LossResultF32 = contrastive::LossResult<f32>;
pub type LossResultExact = contrastive::LossResult<Exact>;

pub type ScenarioMetrics = eval::ScenarioMetrics<f64>;
pub type ScenarioMetricsExact = eval::ScenarioMetrics<Exact>;

pub type EvalReport = eval::EvalReport<f64>;
pub type EvalReportExact = eval::EvalReport<Exact>;
