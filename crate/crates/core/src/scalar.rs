//! Scalar abstraction for the loss and metric code.
//!
//! Implemented for `f32`, `f64` and [`BigRational`]. The rational instance
//! evaluates the transcendental pieces (`exp`, `ln`) through `f64` and lifts
//! the result back exactly, so every field operation downstream of them is
//! exact.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};
use std::fmt::Debug;

pub trait Scalar: Num + Signed + Clone + PartialOrd + Debug + FromPrimitive + ToPrimitive + Send + Sync {
    /// Lifts an `f64`. Returns `None` for non-finite input.
    fn from_f64_lossless(x: f64) -> Option<Self>;

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn is_finite_value(&self) -> bool;

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar")
    }

    /// Logistic function `1 / (1 + e^{-x})`.
    fn logistic(&self) -> Self;

    /// `ln(1 + e^x)`, evaluated without overflow.
    fn softplus(&self) -> Self;
}

macro_rules! float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            fn from_f64_lossless(x: f64) -> Option<Self> {
                x.is_finite().then_some(x as $t)
            }

            fn is_finite_value(&self) -> bool {
                self.is_finite()
            }

            fn logistic(&self) -> Self {
                let x = *self;
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }

            fn softplus(&self) -> Self {
                let x = *self;
                x.max(0.0) + (-x.abs()).exp().ln_1p()
            }
        }
    };
}

float_scalar!(f32);
float_scalar!(f64);

impl Scalar for BigRational {
    fn from_f64_lossless(x: f64) -> Option<Self> {
        BigRational::from_float(x)
    }

    fn is_finite_value(&self) -> bool {
        true
    }

    fn logistic(&self) -> Self {
        let y = self.to_f64_lossy().logistic();
        BigRational::from_float(y).unwrap_or_else(|| BigRational::from_integer(BigInt::from(0)))
    }

    fn softplus(&self) -> Self {
        let y = self.to_f64_lossy().softplus();
        BigRational::from_float(y).expect("softplus of a finite value is finite")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_is_stable_at_extremes() {
        assert_eq!(800.0f64.logistic(), 1.0);
        assert_eq!((-800.0f64).logistic(), 0.0);
        assert_eq!(0.0f64.logistic(), 0.5);
        assert_eq!(0.0f32.logistic(), 0.5);
    }

    #[test]
    fn softplus_matches_naive_form_where_safe() {
        for x in [-20.0f64, -2.0, -0.5, 0.0, 0.5, 2.0, 20.0] {
            let naive = (1.0 + x.exp()).ln();
            assert!((x.softplus() - naive).abs() < 1e-12, "{x}");
        }
        assert_eq!(1000.0f64.softplus(), 1000.0);
        assert!((-1000.0f64).softplus() >= 0.0);
    }

    #[test]
    fn rational_round_trips_f64() {
        let r = BigRational::from_f64_lossless(-0.375).unwrap();
        assert_eq!(r.to_f64_lossy(), -0.375);
        assert!(BigRational::from_f64_lossless(f64::NAN).is_none());
        assert!(f64::from_f64_lossless(f64::INFINITY).is_none());
    }
}
