//! Scalar abstraction for scores and log-probabilities.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type used for informativeness scores, log-probabilities
/// and sequence likelihoods: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used for constants and configuration.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `log(sum(exp(xs)))`, stable for large magnitudes. Returns `-inf` for an
/// empty input or when every element is `-inf`.
pub fn log_sum_exp<S: Scalar>(xs: impl IntoIterator<Item = S> + Clone) -> S {
    let max = xs
        .clone()
        .into_iter()
        .fold(S::neg_infinity(), |m, x| if x > m { x } else { m });
    if max == S::neg_infinity() {
        return max;
    }
    let total: S = xs.into_iter().map(|x| (x - max).exp()).sum();
    max + total.ln()
}

/// Relative equality used for the identical-score fallback.
pub fn approx_eq_rel<S: Scalar>(a: S, b: S, rel: S) -> bool {
    if a == b {
        return true;
    }
    let scale = a.abs().max(b.abs());
    (a - b).abs() <= rel * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_matches_direct_sum() {
        let xs = [-1.0f64, -2.0, -0.5];
        let direct = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(xs) - direct).abs() < 1e-12);
        let xs32 = [-1.0f32, -2.0, -0.5];
        assert!((log_sum_exp(xs32) as f64 - direct).abs() < 1e-6);
    }

    #[test]
    fn lse_of_nothing_is_neg_inf() {
        assert_eq!(log_sum_exp(Vec::<f64>::new()), f64::NEG_INFINITY);
        assert_eq!(log_sum_exp([f64::NEG_INFINITY; 2]), f64::NEG_INFINITY);
    }

    #[test]
    fn rel_eq() {
        assert!(approx_eq_rel(1.0f64, 1.0 + 1e-14, 1e-12));
        assert!(!approx_eq_rel(1.0f64, 1.0 + 1e-9, 1e-12));
        assert!(approx_eq_rel(0.0f64, 0.0, 1e-12));
    }
}
