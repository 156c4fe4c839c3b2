//! Densities, priors and parameter transforms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Real;

/// `log N(x; mean, var)`.
#[inline]
pub fn normal_logpdf<F: Real>(x: F, mean: F, var: F) -> F {
    if !(var > F::zero()) {
        return F::neg_infinity();
    }
    let d = x - mean;
    -F::lit(0.5) * ((F::TAU() * var).ln() + d * d / var)
}

/// The bracket `1 - xi (y - mu) / sigma` of the GEV-for-minima law.
#[inline]
fn gev_bracket<F: Real>(y: F, mu: F, xi: F, sigma: F) -> F {
    F::one() - xi * (y - mu) / sigma
}

fn check_gev<F: Real>(xi: F, sigma: F) -> Result<()> {
    if !(sigma > F::zero()) || !sigma.is_finite() {
        return Err(Error::InvalidParameter(format!("gev scale {sigma}")));
    }
    if xi == F::zero() || !xi.is_finite() {
        return Err(Error::InvalidParameter(format!("gev shape {xi}")));
    }
    Ok(())
}

/// `log(1 - G(y))` for the GEV law for minima; `0` below the support.
#[inline]
pub fn gev_log_survival_unchecked<F: Real>(y: F, mu: F, xi: F, sigma: F) -> F {
    let s = gev_bracket(y, mu, xi, sigma);
    if s <= F::zero() {
        // {.}_+ = 0: below the support for xi < 0, beyond it for xi > 0.
        return if xi < F::zero() { F::zero() } else { F::neg_infinity() };
    }
    -(s.powf(-F::one() / xi))
}

/// Log-density of the GEV law for minima; `-inf` off the support.
#[inline]
pub fn gev_logpdf_unchecked<F: Real>(y: F, mu: F, xi: F, sigma: F) -> F {
    let s = gev_bracket(y, mu, xi, sigma);
    if !(s > F::zero()) {
        return F::neg_infinity();
    }
    let inv = -F::one() / xi;
    let ls = s.ln();
    let v = -sigma.ln() + (inv - F::one()) * ls - (inv * ls).exp();
    if v.is_nan() {
        F::neg_infinity()
    } else {
        v
    }
}

/// Distribution function `G(y | mu, xi, sigma) = 1 - exp[-{1 - xi (y-mu)/sigma}_+^{-1/xi}]`.
pub fn gev_cdf<F: Real>(y: F, mu: F, xi: F, sigma: F) -> Result<F> {
    check_gev(xi, sigma)?;
    let ls = gev_log_survival_unchecked(y, mu, xi, sigma);
    Ok(-ls.exp_m1())
}

pub fn gev_logpdf<F: Real>(y: F, mu: F, xi: F, sigma: F) -> Result<F> {
    check_gev(xi, sigma)?;
    Ok(gev_logpdf_unchecked(y, mu, xi, sigma))
}

/// Inverse of the cumulative hazard `H(y) = -log(1 - G(y))`, i.e. the `y`
/// with `H(y) = h`.
pub fn gev_hazard_inverse<F: Real>(h: F, mu: F, xi: F, sigma: F) -> F {
    let s = h.powf(-xi);
    mu + sigma * (F::one() - s) / xi
}

/// One-dimensional prior laws used for model parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Prior {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    /// Rate parametrisation, support `(0, inf)`.
    Exponential { rate: f64 },
    /// `-x ~ Exp(rate)`, support `(-inf, 0)`.
    NegExponential { rate: f64 },
}

impl Prior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Prior::Uniform { lo, hi } => lo < hi && lo.is_finite() && hi.is_finite(),
            Prior::Normal { mean, sd } => sd > 0.0 && mean.is_finite() && sd.is_finite(),
            Prior::Exponential { rate } | Prior::NegExponential { rate } => {
                rate > 0.0 && rate.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("prior {self:?}")))
        }
    }

    pub fn logpdf<F: Real>(&self, x: F) -> F {
        match *self {
            Prior::Uniform { lo, hi } => {
                if x > F::lit(lo) && x < F::lit(hi) {
                    -F::lit(hi - lo).ln()
                } else {
                    F::neg_infinity()
                }
            }
            Prior::Normal { mean, sd } => normal_logpdf(x, F::lit(mean), F::lit(sd * sd)),
            Prior::Exponential { rate } => {
                if x > F::zero() {
                    F::lit(rate).ln() - F::lit(rate) * x
                } else {
                    F::neg_infinity()
                }
            }
            Prior::NegExponential { rate } => {
                if x < F::zero() {
                    F::lit(rate).ln() + F::lit(rate) * x
                } else {
                    F::neg_infinity()
                }
            }
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match *self {
            Prior::Uniform { lo, hi } => lo + (hi - lo) * rng.uniform(),
            Prior::Normal { mean, sd } => rng.normal(mean, sd),
            Prior::Exponential { rate } => rng.exp1() / rate,
            Prior::NegExponential { rate } => -rng.exp1() / rate,
        }
    }

    /// Transform to an unconstrained scale used by the Gaussian proposals.
    pub fn natural_transform(&self) -> Transform {
        match *self {
            Prior::Uniform { lo, hi } => Transform::Logit { lo, hi },
            Prior::Normal { .. } => Transform::Identity,
            Prior::Exponential { .. } => Transform::Log,
            Prior::NegExponential { .. } => Transform::NegLog,
        }
    }
}

/// A model parameter is either held fixed or given a prior (and then
/// becomes a component of theta).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamSpec {
    Fixed { fixed: f64 },
    Free(Prior),
}

impl ParamSpec {
    pub fn fixed(v: f64) -> Self {
        ParamSpec::Fixed { fixed: v }
    }

    pub fn is_free(&self) -> bool {
        matches!(self, ParamSpec::Free(_))
    }
}

/// Bijection between a constrained parameter and the real line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// `theta = exp(phi)`.
    Log,
    /// `theta = -exp(phi)`.
    NegLog,
    /// `theta = lo + (hi - lo) / (1 + exp(-phi))`.
    Logit { lo: f64, hi: f64 },
}

#[inline]
fn softplus<F: Real>(x: F) -> F {
    if x > F::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Transform {
    pub fn to_unconstrained<F: Real>(&self, theta: F) -> F {
        match *self {
            Transform::Identity => theta,
            Transform::Log => theta.ln(),
            Transform::NegLog => (-theta).ln(),
            Transform::Logit { lo, hi } => {
                let p = (theta - F::lit(lo)) / F::lit(hi - lo);
                p.ln() - (-p).ln_1p()
            }
        }
    }

    pub fn to_constrained<F: Real>(&self, phi: F) -> F {
        match *self {
            Transform::Identity => phi,
            Transform::Log => phi.exp(),
            Transform::NegLog => -phi.exp(),
            Transform::Logit { lo, hi } => {
                let s = F::one() / (F::one() + (-phi).exp());
                F::lit(lo) + F::lit(hi - lo) * s
            }
        }
    }

    /// `log |d theta / d phi|` at `phi`.
    pub fn log_jacobian<F: Real>(&self, phi: F) -> F {
        match *self {
            Transform::Identity => F::zero(),
            Transform::Log | Transform::NegLog => phi,
            Transform::Logit { lo, hi } => {
                F::lit(hi - lo).ln() - softplus(-phi) - softplus(phi)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_examples() {
        let v = normal_logpdf(0.0f64, 0.0, 1.0);
        assert!((v - (1.0 / (2.0 * std::f64::consts::PI).sqrt()).ln()).abs() < 1e-15);
        let v = normal_logpdf(9.0f64, 9.0, 4.0);
        assert!((v + 0.5 * (8.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn gev_at_location() {
        for (xi, sigma) in [(-0.1, 5.0), (-0.5, 1.0), (0.3, 2.0)] {
            let g = gev_cdf(520.0f64, 520.0, xi, sigma).unwrap();
            assert!((g - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        }
    }

    #[test]
    fn gev_support_boundary() {
        let (mu, xi, sigma) = (520.0f64, -0.1, 5.0);
        let lb = mu + sigma / xi;
        assert_eq!(gev_cdf(lb, mu, xi, sigma).unwrap(), 0.0);
        assert_eq!(gev_cdf(lb - 3.0, mu, xi, sigma).unwrap(), 0.0);
        assert_eq!(gev_logpdf(lb - 1.0, mu, xi, sigma).unwrap(), f64::NEG_INFINITY);
        assert!(gev_cdf(lb + 1e-6, mu, xi, sigma).unwrap() >= 0.0);
        assert!(gev_cdf(1e6, mu, xi, sigma).unwrap() > 1.0 - 1e-12);
    }

    #[test]
    fn gev_invalid() {
        assert!(gev_cdf(1.0f64, 0.0, 0.0, 1.0).is_err());
        assert!(gev_cdf(1.0f64, 0.0, -0.1, 0.0).is_err());
        assert!(gev_logpdf(1.0f64, 0.0, -0.1, -1.0).is_err());
    }

    #[test]
    fn gev_density_is_derivative_of_cdf() {
        let (mu, xi, sigma) = (520.0f64, -0.2, 4.0);
        for y in [505.0, 515.0, 520.0, 530.0, 560.0] {
            let h = 1e-5;
            let fd = (gev_cdf(y + h, mu, xi, sigma).unwrap() - gev_cdf(y - h, mu, xi, sigma).unwrap())
                / (2.0 * h);
            let g = gev_logpdf(y, mu, xi, sigma).unwrap().exp();
            assert!((fd - g).abs() < 1e-8, "y={y}: {fd} vs {g}");
        }
    }

    #[test]
    fn hazard_inverse_roundtrip() {
        let (mu, xi, sigma) = (500.0f64, -0.15, 3.0);
        for y in [485.0, 500.0, 512.0] {
            let h = -gev_log_survival_unchecked(y, mu, xi, sigma);
            assert!((gev_hazard_inverse(h, mu, xi, sigma) - y).abs() < 1e-9);
        }
    }

    #[test]
    fn transforms_roundtrip_and_jacobian() {
        let cases = [
            (Transform::Identity, 0.3),
            (Transform::Log, 2.5),
            (Transform::NegLog, -0.7),
            (Transform::Logit { lo: -1.0, hi: 1.0 }, 0.4),
        ];
        for (t, theta) in cases {
            let phi: f64 = t.to_unconstrained(theta);
            assert!((t.to_constrained(phi) - theta).abs() < 1e-12);
            let h = 1e-6;
            let fd = (t.to_constrained(phi + h) - t.to_constrained(phi - h)) / (2.0 * h);
            assert!((fd.abs().ln() - t.log_jacobian(phi)).abs() < 1e-6, "{t:?}");
        }
    }

    #[test]
    fn prior_sampling_within_support() {
        let mut r = RngStream::new(1);
        let priors = [
            Prior::Uniform { lo: -1.0, hi: 1.0 },
            Prior::Exponential { rate: 0.2 },
            Prior::NegExponential { rate: 0.5 },
            Prior::Normal { mean: 0.0, sd: 10.0 },
        ];
        for p in priors {
            for _ in 0..1000 {
                let x = p.sample(&mut r);
                assert!(p.logpdf(x).is_finite(), "{p:?} {x}");
            }
        }
    }
}
