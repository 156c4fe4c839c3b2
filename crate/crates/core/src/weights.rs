//! Log-domain weight arithmetic.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// `log(sum(exp(x)))` with max shift. Returns `-inf` when every entry is
/// `-inf` (or the slice is empty). NaN entries are treated as `-inf`.
pub fn log_sum_exp<F: Real>(xs: &[F]) -> F {
    let max = xs
        .iter()
        .copied()
        .filter(|x| !x.is_nan())
        .fold(F::neg_infinity(), F::max);
    if max == F::neg_infinity() {
        return max;
    }
    if max == F::infinity() {
        return max;
    }
    let s: F = xs
        .iter()
        .filter(|x| !x.is_nan())
        .map(|&x| (x - max).exp())
        .sum();
    max + s.ln()
}

/// `log(mean(exp(x)))`.
pub fn log_mean_exp<F: Real>(xs: &[F]) -> F {
    log_sum_exp(xs) - F::from_count(xs.len()).ln()
}

/// Normalised linear weights from log-weights, plus their log-sum-exp.
pub fn normalize_log_weights<F: Real>(log_w: &[F]) -> Result<(Vec<F>, F)> {
    let lse = log_sum_exp(log_w);
    if !lse.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let w = log_w
        .iter()
        .map(|&l| if l.is_nan() { F::zero() } else { (l - lse).exp() })
        .collect();
    Ok((w, lse))
}

/// Effective sample size `(sum w)^2 / sum w^2` of unnormalised linear weights.
pub fn ess<F: Real>(weights: &[F]) -> Result<F> {
    let max = weights.iter().copied().fold(F::zero(), F::max);
    if !(max > F::zero()) || !max.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let (mut s1, mut s2) = (F::zero(), F::zero());
    for &w in weights {
        let r = w / max;
        s1 += r;
        s2 += r * r;
    }
    Ok(s1 * s1 / s2)
}

/// Effective sample size computed from log-weights.
pub fn ess_from_log<F: Real>(log_w: &[F]) -> Result<F> {
    let max = log_w
        .iter()
        .copied()
        .filter(|x| !x.is_nan())
        .fold(F::neg_infinity(), F::max);
    if !max.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let (mut s1, mut s2) = (F::zero(), F::zero());
    for &l in log_w {
        if l.is_nan() {
            continue;
        }
        let r = (l - max).exp();
        s1 += r;
        s2 += r * r;
    }
    Ok(s1 * s1 / s2)
}
