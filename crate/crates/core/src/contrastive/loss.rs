//! Contrastive preference loss over mean token log-probabilities.
//!
//! For a pair with chosen log-probs `c_1..c_C` and rejected log-probs
//! `r_1..r_R`:
//!
//! ```text
//! margin = mean(c) - mean(r)
//! loss   = -ln sigmoid(margin) = softplus(-margin)
//! dL/dc_i = -(1/C) * sigmoid(-margin)
//! dL/dr_j = +(1/R) * sigmoid(-margin)
//! ```
//!
//! The batch loss is the sum over pairs (or the mean with [`Reduction::Mean`]).

use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("pair {pair}: {side} log-probs are empty")]
    EmptyTokens { pair: usize, side: Side },
    #[error("pair {pair}: {side}[{index}] is not finite")]
    NonFinite { pair: usize, side: Side, index: usize },
    #[error("pair {pair}: {side}[{index}] = {value} is a positive log-probability")]
    Positive { pair: usize, side: Side, index: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Chosen,
    Rejected,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Chosen => "chosen",
            Side::Rejected => "rejected",
        })
    }
}

/// Per-token log-probabilities of the chosen and rejected completions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProbs<T> {
    #[serde(rename = "chosen_logps")]
    pub chosen: Vec<T>,
    #[serde(rename = "rejected_logps")]
    pub rejected: Vec<T>,
}

impl<T: Scalar> TokenLogProbs<T> {
    pub fn new(chosen: Vec<T>, rejected: Vec<T>) -> Self {
        Self { chosen, rejected }
    }

    fn validate(&self, pair: usize) -> Result<(), LossError> {
        for (side, values) in [(Side::Chosen, &self.chosen), (Side::Rejected, &self.rejected)] {
            if values.is_empty() {
                return Err(LossError::EmptyTokens { pair, side });
            }
            for (index, v) in values.iter().enumerate() {
                if !v.is_finite_value() {
                    return Err(LossError::NonFinite { pair, side, index });
                }
                if v.is_positive() {
                    return Err(LossError::Positive { pair, side, index, value: v.to_f64_lossy() });
                }
            }
        }
        Ok(())
    }

    /// `mean(chosen) - mean(rejected)`.
    pub fn margin(&self) -> T {
        mean(&self.chosen) - mean(&self.rejected)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossResult<T> {
    pub loss: T,
    pub pair_losses: Vec<T>,
    pub margins: Vec<T>,
    pub grad_chosen: Vec<Vec<T>>,
    pub grad_rejected: Vec<Vec<T>>,
}

fn mean<T: Scalar>(values: &[T]) -> T {
    let sum = values.iter().fold(T::zero(), |acc, v| acc + v.clone());
    sum / T::from_count(values.len())
}

/// `-ln sigmoid(margin)` for one pair.
pub fn pair_loss<T: Scalar>(margin: &T) -> T {
    (-margin.clone()).softplus()
}

pub fn contrastive_loss<T: Scalar>(
    batch: &[TokenLogProbs<T>],
    reduction: Reduction,
) -> Result<LossResult<T>, LossError> {
    if batch.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    for (i, pair) in batch.iter().enumerate() {
        pair.validate(i)?;
    }
    let scale = match reduction {
        Reduction::Sum => T::one(),
        Reduction::Mean => T::one() / T::from_count(batch.len()),
    };

    let mut result = LossResult {
        loss: T::zero(),
        pair_losses: Vec::with_capacity(batch.len()),
        margins: Vec::with_capacity(batch.len()),
        grad_chosen: Vec::with_capacity(batch.len()),
        grad_rejected: Vec::with_capacity(batch.len()),
    };
    for pair in batch {
        let margin = pair.margin();
        let loss = pair_loss(&margin);
        // 1 - sigmoid(m) == sigmoid(-m), computed directly to avoid cancellation.
        let weight = (-margin.clone()).logistic() * scale.clone();
        let c = weight.clone() / T::from_count(pair.chosen.len());
        let r = weight / T::from_count(pair.rejected.len());
        result.grad_chosen.push(vec![-c; pair.chosen.len()]);
        result.grad_rejected.push(vec![r; pair.rejected.len()]);
        result.loss = result.loss + loss.clone();
        result.pair_losses.push(loss);
        result.margins.push(margin);
    }
    result.loss = result.loss * scale;
    Ok(result)
}

fn entry(batch: &mut [TokenLogProbs<f64>], pair: usize, side: Side, index: usize) -> &mut f64 {
    match side {
        Side::Chosen => &mut batch[pair].chosen[index],
        Side::Rejected => &mut batch[pair].rejected[index],
    }
}

/// Largest relative deviation between the analytic gradient and central
/// finite differences of the batch loss with step `h`. Entries closer than
/// `h` to zero use a backward difference so the probe stays a valid
/// log-probability.
///
/// Relative error is `|analytic - numeric| / max(|analytic|, |numeric|, floor)`.
pub fn finite_difference_residual(
    batch: &[TokenLogProbs<f64>],
    reduction: Reduction,
    h: f64,
    floor: f64,
) -> Result<f64, LossError> {
    let analytic = contrastive_loss(batch, reduction)?;
    let mut work = batch.to_vec();
    let loss_at = |work: &mut Vec<TokenLogProbs<f64>>, p, side, i, x: f64| {
        *entry(work, p, side, i) = x;
        contrastive_loss(work, reduction).map(|r| r.loss)
    };
    let mut worst = 0.0f64;
    for p in 0..batch.len() {
        for (side, grads) in [(Side::Chosen, &analytic.grad_chosen[p]), (Side::Rejected, &analytic.grad_rejected[p])] {
            for (i, &exact) in grads.iter().enumerate() {
                let orig = *entry(&mut work, p, side, i);
                let numeric = if orig + h <= 0.0 {
                    let plus = loss_at(&mut work, p, side, i, orig + h)?;
                    let minus = loss_at(&mut work, p, side, i, orig - h)?;
                    (plus - minus) / (2.0 * h)
                } else {
                    let here = loss_at(&mut work, p, side, i, orig)?;
                    let minus = loss_at(&mut work, p, side, i, orig - h)?;
                    (here - minus) / h
                };
                *entry(&mut work, p, side, i) = orig;
                let denom = exact.abs().max(numeric.abs()).max(floor);
                worst = worst.max((exact - numeric).abs() / denom);
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use num_traits::Zero;
    use proptest::prelude::*;

    fn pair(c: &[f64], r: &[f64]) -> TokenLogProbs<f64> {
        TokenLogProbs::new(c.to_vec(), r.to_vec())
    }

    #[test]
    fn zero_margin_is_ln2() {
        let out = contrastive_loss(&[pair(&[-1.0, -3.0], &[-2.0])], Reduction::Sum).unwrap();
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(out.margins, [0.0]);
    }

    #[test]
    fn worked_example() {
        // High-precision reference values (30 significant digits):
        // ln(1 + e^-2)      = 0.126928011042972496443726806358
        // -sigmoid(-2) / 2  = -0.0596014610110587779701354293488
        let out = contrastive_loss(&[pair(&[-0.5, -1.5], &[-2.0, -4.0])], Reduction::Sum).unwrap();
        assert_eq!(out.margins, [2.0]);
        assert!((out.loss - 0.126_928_011_042_972_5).abs() < 1e-15);
        for g in &out.grad_chosen[0] {
            assert!((g + 0.059_601_461_011_058_78).abs() < 1e-15);
        }
        for g in &out.grad_rejected[0] {
            assert!((g - 0.059_601_461_011_058_78).abs() < 1e-15);
        }
    }

    #[test]
    fn identical_pairs_add_up() {
        let one = pair(&[-0.3, -0.9, -0.1], &[-1.7]);
        let single = contrastive_loss(std::slice::from_ref(&one), Reduction::Sum).unwrap().loss;
        for k in 1..6 {
            let batch = vec![one.clone(); k];
            let total = contrastive_loss(&batch, Reduction::Sum).unwrap().loss;
            assert!((total - k as f64 * single).abs() < 1e-12);
            let mean = contrastive_loss(&batch, Reduction::Mean).unwrap().loss;
            assert!((mean - single).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_inputs() {
        assert_eq!(contrastive_loss::<f64>(&[], Reduction::Sum), Err(LossError::EmptyBatch));
        assert_eq!(
            contrastive_loss(&[pair(&[], &[-1.0])], Reduction::Sum),
            Err(LossError::EmptyTokens { pair: 0, side: Side::Chosen })
        );
        assert_eq!(
            contrastive_loss(&[pair(&[-1.0], &[-1.0]), pair(&[-1.0], &[f64::NAN])], Reduction::Sum),
            Err(LossError::NonFinite { pair: 1, side: Side::Rejected, index: 0 })
        );
        assert!(matches!(
            contrastive_loss(&[pair(&[-1.0, 0.5], &[-1.0])], Reduction::Sum),
            Err(LossError::Positive { pair: 0, side: Side::Chosen, index: 1, .. })
        ));
    }

    #[test]
    fn extreme_margins_do_not_overflow() {
        let out = contrastive_loss(&[pair(&[-1.0], &[-900.0]), pair(&[-900.0], &[-1.0])], Reduction::Sum).unwrap();
        assert!(out.pair_losses[0] >= 0.0 && out.pair_losses[0] < 1e-300);
        assert!((out.pair_losses[1] - 899.0).abs() < 1e-9);
        assert!(out.loss.is_finite());
    }

    #[test]
    fn f32_instance_agrees_with_f64() {
        let b64 = [pair(&[-0.5, -1.5], &[-2.0, -4.0])];
        let b32 = [TokenLogProbs::new(vec![-0.5f32, -1.5], vec![-2.0f32, -4.0])];
        let a = contrastive_loss(&b64, Reduction::Sum).unwrap();
        let b = contrastive_loss(&b32, Reduction::Sum).unwrap();
        assert!((a.loss - b.loss as f64).abs() < 1e-6);
    }

    #[test]
    fn rational_gradients_cancel_exactly() {
        let q = |x: f64| BigRational::from_float(x).unwrap();
        let batch = vec![
            TokenLogProbs::new(vec![q(-0.25), q(-1.5), q(-0.125)], vec![q(-2.0); 7]),
            TokenLogProbs::new(vec![q(-3.0); 49], vec![q(-0.5)]),
        ];
        let out = contrastive_loss(&batch, Reduction::Sum).unwrap();
        for (gc, gr) in out.grad_chosen.iter().zip(&out.grad_rejected) {
            let total = gc.iter().chain(gr).fold(BigRational::zero(), |a, b| a + b);
            assert!(total.is_zero());
        }
    }

    #[test]
    fn fd_residual_helper_reports_small_error() {
        let batch = [pair(&[-0.5, -1.5], &[-2.0, -4.0]), pair(&[-3.0], &[-0.2, -0.1, -0.7])];
        let res = finite_difference_residual(&batch, Reduction::Sum, 1e-6, 1e-12).unwrap();
        assert!(res < 1e-5, "{res}");
        // near-zero entry takes the backward branch
        let res = finite_difference_residual(&[pair(&[-1e-8], &[-1.0])], Reduction::Sum, 1e-6, 1e-12).unwrap();
        assert!(res < 1e-4, "{res}");
    }

    proptest! {
        #[test]
        fn shift_invariance(
            c in prop::collection::vec(-8.0f64..-0.01, 1..6),
            r in prop::collection::vec(-8.0f64..-0.01, 1..6),
            shift in -1.0f64..0.0,
        ) {
            let base = contrastive_loss(&[pair(&c, &r)], Reduction::Sum).unwrap();
            // Exact in rationals; approximate in floats.
            let q = |v: &[f64], s: f64| v.iter().map(|x| BigRational::from_float(*x).unwrap() + BigRational::from_float(s).unwrap()).collect::<Vec<_>>();
            let exact0 = TokenLogProbs::new(q(&c, 0.0), q(&r, 0.0)).margin();
            let exact1 = TokenLogProbs::new(q(&c, shift), q(&r, shift)).margin();
            prop_assert_eq!(exact0, exact1);
            let shifted: Vec<f64> = c.iter().map(|x| x + shift).collect();
            let shifted_r: Vec<f64> = r.iter().map(|x| x + shift).collect();
            let moved = contrastive_loss(&[pair(&shifted, &shifted_r)], Reduction::Sum).unwrap();
            prop_assert!((base.loss - moved.loss).abs() < 1e-12);
        }

        #[test]
        fn gradient_signs_and_equal_entries(
            c in prop::collection::vec(-8.0f64..0.0, 1..6),
            r in prop::collection::vec(-8.0f64..0.0, 1..6),
        ) {
            let out = contrastive_loss(&[pair(&c, &r)], Reduction::Sum).unwrap();
            prop_assert!(out.loss > 0.0);
            prop_assert!(out.grad_chosen[0].iter().all(|g| *g <= 0.0 && *g == out.grad_chosen[0][0]));
            prop_assert!(out.grad_rejected[0].iter().all(|g| *g >= 0.0 && *g == out.grad_rejected[0][0]));
        }
    }
}
