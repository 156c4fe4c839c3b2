//! GEV-for-minima model of the two best annual times, with a smooth
//! second-order random-walk location.

use serde::{Deserialize, Serialize};

use super::{Observation, StateSpaceModel};
use crate::dist::{gev_hazard_inverse, gev_log_survival_unchecked, gev_logpdf_unchecked, Prior, Transform};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Real;
use crate::weights::normalize_log_weights;

/// Log-density of the ordered pair `y_1 < y_2` given location `mu`:
/// `log g(y1) + log g(y2) - log(1 - G(y1))`.
fn pair_logpdf<F: Real>(y1: F, y2: F, mu: F, xi: F, sigma: F) -> F {
    let a = gev_logpdf_unchecked(y1, mu, xi, sigma);
    let b = gev_logpdf_unchecked(y2, mu, xi, sigma);
    if a == F::neg_infinity() || b == F::neg_infinity() {
        return F::neg_infinity();
    }
    a + b - gev_log_survival_unchecked(y1, mu, xi, sigma)
}

/// `log g(y_{1:2} | mu_t, theta)` with theta = `(nu, xi, sigma)` and
/// `x = (mu, mu_dot)`. A missing year contributes `0`.
pub fn athletics_obs_logpdf<F: Real>(theta: &[F], x: &[F], y: &Observation<F>) -> Result<F> {
    if y.missing {
        return Ok(F::zero());
    }
    let (y1, y2) = (y.values[0], y.values[1]);
    if !(y1 < y2) {
        return Err(Error::InvalidObservation {
            t: 0,
            reason: format!("times not increasing: {y1} >= {y2}"),
        });
    }
    Ok(pair_logpdf(y1, y2, x[0], theta[1], theta[2]))
}

/// The same density coded factor by factor:
/// `{1 - G(y2)} prod_i g(y_i) / {1 - G(y_i)}`, evaluated on the natural scale.
pub fn athletics_obs_logpdf_direct(theta: &[f64], x: &[f64], y1: f64, y2: f64) -> f64 {
    let (mu, xi, sigma) = (x[0], theta[1], theta[2]);
    let cdf = |y: f64| {
        let s = 1.0 - xi * (y - mu) / sigma;
        if s <= 0.0 {
            0.0
        } else {
            1.0 - (-s.powf(-1.0 / xi)).exp()
        }
    };
    let pdf = |y: f64| {
        let s = 1.0 - xi * (y - mu) / sigma;
        if s <= 0.0 {
            0.0
        } else {
            s.powf(-1.0 / xi - 1.0) * (-s.powf(-1.0 / xi)).exp() / sigma
        }
    };
    let mut dens = 1.0 - cdf(y2);
    for y in [y1, y2] {
        dens *= pdf(y) / (1.0 - cdf(y));
    }
    dens.ln()
}

/// `x_{t+1} = F x_t + nu L eps` with `F = [[1,1],[0,1]]` and `L L' = Q / nu^2`.
pub fn athletics_transition<F: Real>(theta: &[F], x: &[F], rng: &mut RngStream) -> [F; 2] {
    let nu = theta[0];
    let e1 = F::lit(rng.std_normal());
    let e2 = F::lit(rng.std_normal());
    let l11 = F::one() / F::lit(3.0).sqrt();
    let l21 = F::lit(3.0).sqrt() / F::lit(2.0);
    let l22 = F::lit(0.5);
    [
        x[0] + x[1] + nu * l11 * e1,
        x[1] + nu * (l21 * e1 + l22 * e2),
    ]
}

/// Weighted estimate of `P(y_t <= y)`: `sum_m W^m G(y | mu^m, theta^m)`,
/// one selected location per theta-particle.
pub fn beat_probability<F: Real>(log_weights: &[F], thetas: &[Vec<F>], mu_values: &[F], y: F) -> Result<F> {
    let (w, _) = normalize_log_weights(log_weights)?;
    let mut p = F::zero();
    for ((wm, th), &mu) in w.iter().zip(thetas).zip(mu_values) {
        if *wm > F::zero() {
            let g = -gev_log_survival_unchecked(y, mu, th[1], th[2]).exp_m1();
            p += *wm * g;
        }
    }
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AthleticsModel {
    pub nu: Prior,
    pub xi: Prior,
    pub sigma: Prior,
    pub mu0_mean: f64,
    pub mu0_sd: f64,
    pub mudot0_sd: f64,
}

impl Default for AthleticsModel {
    fn default() -> Self {
        Self {
            nu: Prior::Exponential { rate: 0.2 },
            xi: Prior::NegExponential { rate: 0.5 },
            sigma: Prior::Exponential { rate: 0.2 },
            mu0_mean: 520.0,
            mu0_sd: 10.0,
            mudot0_sd: 1.0,
        }
    }
}

impl AthleticsModel {
    pub fn validate(&self) -> Result<()> {
        for p in [self.nu, self.xi, self.sigma] {
            p.validate()?;
        }
        if !matches!(self.xi, Prior::NegExponential { .. }) {
            return Err(Error::InvalidParameter("athletics shape prior must be on xi < 0".into()));
        }
        if !(self.mu0_sd > 0.0 && self.mudot0_sd > 0.0 && self.mu0_mean.is_finite()) {
            return Err(Error::InvalidParameter("athletics initial law".into()));
        }
        Ok(())
    }

    fn priors(&self) -> [Prior; 3] {
        [self.nu, self.xi, self.sigma]
    }
}

impl<F: Real> StateSpaceModel<F> for AthleticsModel {
    fn name(&self) -> &'static str {
        "athletics"
    }

    fn theta_names(&self) -> Vec<String> {
        ["nu", "xi", "sigma"].map(String::from).to_vec()
    }

    fn state_names(&self) -> Vec<String> {
        ["mu", "mu_dot"].map(String::from).to_vec()
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn prior_sample(&self, rng: &mut RngStream) -> Vec<F> {
        self.priors().iter().map(|p| F::lit(p.sample(rng))).collect()
    }

    fn prior_logpdf(&self, theta: &[F]) -> F {
        self.priors().iter().zip(theta).map(|(p, &v)| p.logpdf(v)).sum()
    }

    fn transforms(&self) -> Vec<Transform> {
        self.priors().iter().map(|p| p.natural_transform()).collect()
    }

    fn init_sample(&self, theta: &[F], rng: &mut RngStream, out: &mut [F]) {
        let x0 = [
            F::lit(rng.normal(self.mu0_mean, self.mu0_sd)),
            F::lit(rng.normal(0.0, self.mudot0_sd)),
        ];
        out.copy_from_slice(&athletics_transition(theta, &x0, rng));
    }

    fn transition_sample(&self, theta: &[F], prev: &[F], _t: usize, rng: &mut RngStream, out: &mut [F]) {
        out.copy_from_slice(&athletics_transition(theta, prev, rng));
    }

    fn obs_logpdf(&self, theta: &[F], x: &[F], y: &[F], _t: usize) -> F {
        if !(y[0] < y[1]) {
            return F::neg_infinity();
        }
        pair_logpdf(y[0], y[1], x[0], theta[1], theta[2])
    }

    /// The two smallest points of a Poisson process with cumulative
    /// intensity `H(y) = -log(1 - G(y))`.
    fn obs_sample(&self, theta: &[F], x: &[F], _t: usize, rng: &mut RngStream) -> Vec<F> {
        let (mu, xi, sigma) = (x[0], theta[1], theta[2]);
        let e1 = F::lit(rng.exp1());
        let e2 = F::lit(rng.exp1());
        let y1 = gev_hazard_inverse(e1, mu, xi, sigma);
        let y2 = gev_hazard_inverse(e1 + e2, mu, xi, sigma);
        vec![y1, y2]
    }

    fn check_observation(&self, y: &Observation<F>, t: usize) -> Result<()> {
        if y.missing {
            return Ok(());
        }
        if y.values.len() != 2 || y.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidObservation {
                t,
                reason: "expected two finite times".into(),
            });
        }
        if !(y.values[0] < y.values[1]) {
            return Err(Error::InvalidObservation {
                t,
                reason: format!("times not increasing: {} >= {}", y.values[0], y.values[1]),
            });
        }
        Ok(())
    }
}
