//! Lévy-driven stochastic volatility models with a compound-Poisson
//! background process, exactly discretised to daily actual volatility.
//!
//! State per factor: `(v, z, u)` where `v` is the actual (integrated)
//! volatility over the last period, `z` the spot volatility at the period
//! end, and `u` the sum of the jump sizes that arrived during the period
//! (needed by the leverage term of the observation equation).

use serde::{Deserialize, Serialize};

use super::StateSpaceModel;
use crate::dist::{normal_logpdf, Prior, Transform};
use crate::error::Result;
use crate::rng::{sample_standard, RngStream, StdDist};
use crate::scalar::Real;

/// One period of a single factor with stationary mean `xi`, stationary
/// variance `omega2` and decay rate `lambda`, starting from spot volatility
/// `z`. Returns `(v, z', u)`.
///
/// `k ~ Poi(lambda xi^2 / omega2)` jumps arrive uniformly in the period with
/// `Exp(xi / omega2)` sizes; `xi = 0` switches the factor off.
pub fn sv_factor_transition<F: Real>(xi: F, omega2: F, lambda: F, z: F, rng: &mut RngStream) -> (F, F, F) {
    let decay = (-lambda).exp();
    let mut z_next = decay * z;
    // z (1 - e^{-lambda}) + sum_j e_j (1 - e^{-lambda (t+1-c_j)}), which equals
    // z - z' + sum_j e_j and is nonnegative term by term.
    let mut integrated = -(-lambda).exp_m1() * z;
    let mut jump_sum = F::zero();
    if xi > F::zero() {
        let mean = (lambda * xi * xi / omega2).as_f64();
        let k = sample_standard(StdDist::Poisson { mean }, rng).unwrap_or(0.0) as u64;
        let rate = (xi / omega2).as_f64();
        for _ in 0..k {
            let remaining = F::lit(rng.uniform());
            let e = F::lit(rng.exp1() / rate);
            z_next += (-lambda * remaining).exp() * e;
            integrated += -(-lambda * remaining).exp_m1() * e;
            jump_sum += e;
        }
    }
    (integrated / lambda, z_next, jump_sum)
}

/// One-factor transition on the state `(v, z, u)`; only `z` of `x` is used.
pub fn sv1_transition<F: Real>(theta: &[F], x: &[F], rng: &mut RngStream) -> [F; 3] {
    let (xi, omega2, lambda) = (theta[2], theta[3], theta[4]);
    let (v, z, u) = sv_factor_transition(xi, omega2, lambda, x[1], rng);
    [v, z, u]
}

/// `log N(y; mu + beta v, v)`; `-inf` when `v <= 0`.
pub fn sv1_obs_logpdf<F: Real>(theta: &[F], x: &[F], y: F) -> F {
    let (mu, beta) = (theta[0], theta[1]);
    let v = x[0];
    if !(v > F::zero()) {
        return F::neg_infinity();
    }
    normal_logpdf(y, mu + beta * v, v)
}

fn stationary_z<F: Real>(xi: F, omega2: F, rng: &mut RngStream) -> F {
    if !(xi > F::zero()) {
        return F::zero();
    }
    let shape = (xi * xi / omega2).as_f64();
    let rate = (xi / omega2).as_f64();
    F::lit(sample_standard(StdDist::Gamma { shape, rate }, rng).unwrap_or(0.0))
}

/// Priors of the one-factor model; theta = `(mu, beta, xi, omega2, lambda)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvPriors {
    pub mu: Prior,
    pub beta: Prior,
    pub xi: Prior,
    pub omega2: Prior,
    pub lambda: Prior,
}

impl Default for SvPriors {
    fn default() -> Self {
        Self {
            mu: Prior::Normal { mean: 0.0, sd: 10.0 },
            beta: Prior::Normal { mean: 0.0, sd: 10.0 },
            xi: Prior::Exponential { rate: 0.2 },
            omega2: Prior::Exponential { rate: 0.2 },
            lambda: Prior::Exponential { rate: 1.0 },
        }
    }
}

impl SvPriors {
    fn all(&self) -> [Prior; 5] {
        [self.mu, self.beta, self.xi, self.omega2, self.lambda]
    }

    pub fn validate(&self) -> Result<()> {
        self.all().iter().try_for_each(|p| p.validate())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sv1Model {
    pub priors: SvPriors,
}

impl<F: Real> StateSpaceModel<F> for Sv1Model {
    fn name(&self) -> &'static str {
        "sv1"
    }

    fn theta_names(&self) -> Vec<String> {
        ["mu", "beta", "xi", "omega2", "lambda"].map(String::from).to_vec()
    }

    fn state_names(&self) -> Vec<String> {
        ["v", "z", "u"].map(String::from).to_vec()
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn prior_sample(&self, rng: &mut RngStream) -> Vec<F> {
        self.priors.all().iter().map(|p| F::lit(p.sample(rng))).collect()
    }

    fn prior_logpdf(&self, theta: &[F]) -> F {
        if !(theta[2] > F::zero() && theta[3] > F::zero() && theta[4] > F::zero()) {
            return F::neg_infinity();
        }
        self.priors.all().iter().zip(theta).map(|(p, &v)| p.logpdf(v)).sum()
    }

    fn transforms(&self) -> Vec<Transform> {
        self.priors.all().iter().map(|p| p.natural_transform()).collect()
    }

    fn init_sample(&self, theta: &[F], rng: &mut RngStream, out: &mut [F]) {
        let z0 = stationary_z(theta[2], theta[3], rng);
        let (v, z, u) = sv_factor_transition(theta[2], theta[3], theta[4], z0, rng);
        out.copy_from_slice(&[v, z, u]);
    }

    fn transition_sample(&self, theta: &[F], prev: &[F], _t: usize, rng: &mut RngStream, out: &mut [F]) {
        out.copy_from_slice(&sv1_transition(theta, prev, rng));
    }

    fn obs_logpdf(&self, theta: &[F], x: &[F], y: &[F], _t: usize) -> F {
        sv1_obs_logpdf(theta, x, y[0])
    }

    fn obs_sample(&self, theta: &[F], x: &[F], _t: usize, rng: &mut RngStream) -> Vec<F> {
        let v = x[0];
        vec![theta[0] + theta[1] * v + v.sqrt() * F::lit(rng.std_normal())]
    }
}

/// Priors of the two-factor model. Theta is
/// `(mu, beta, xi, omega2, w, lambda1, lambda2 - lambda1[, rho1, rho2])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvMultiPriors {
    pub mu: Prior,
    pub beta: Prior,
    pub xi: Prior,
    pub omega2: Prior,
    pub w: Prior,
    pub lambda1: Prior,
    pub lambda_gap: Prior,
    pub rho1: Prior,
    pub rho2: Prior,
}

impl Default for SvMultiPriors {
    fn default() -> Self {
        Self {
            mu: Prior::Normal { mean: 0.0, sd: 10.0 },
            beta: Prior::Normal { mean: 0.0, sd: 10.0 },
            xi: Prior::Exponential { rate: 0.2 },
            omega2: Prior::Exponential { rate: 0.2 },
            w: Prior::Uniform { lo: 0.0, hi: 1.0 },
            lambda1: Prior::Exponential { rate: 1.0 },
            lambda_gap: Prior::Exponential { rate: 0.5 },
            rho1: Prior::Normal { mean: 0.0, sd: 10.0 },
            rho2: Prior::Normal { mean: 0.0, sd: 10.0 },
        }
    }
}

impl SvMultiPriors {
    fn all(&self, leverage: bool) -> Vec<Prior> {
        let mut v = vec![
            self.mu,
            self.beta,
            self.xi,
            self.omega2,
            self.w,
            self.lambda1,
            self.lambda_gap,
        ];
        if leverage {
            v.extend([self.rho1, self.rho2]);
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        self.all(true).iter().try_for_each(|p| p.validate())
    }
}

/// Two-factor SV model, optionally with leverage. Factor `i` evolves with
/// parameters `(w_i xi, w_i omega2, lambda_i)`, `w_1 = w`, `w_2 = 1 - w`;
/// the observed volatility is `v_1 + v_2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvMultiModel {
    pub leverage: bool,
    pub priors: SvMultiPriors,
}

impl Default for SvMultiModel {
    fn default() -> Self {
        Self::new(false)
    }
}

/// Named view of a two-factor theta.
#[derive(Clone, Copy, Debug)]
struct MultiParams<F> {
    mu: F,
    beta: F,
    xi: F,
    omega2: F,
    w: F,
    lambda1: F,
    lambda2: F,
    rho1: F,
    rho2: F,
}

impl SvMultiModel {
    pub fn new(leverage: bool) -> Self {
        Self {
            leverage,
            priors: SvMultiPriors::default(),
        }
    }

    fn params<F: Real>(&self, theta: &[F]) -> MultiParams<F> {
        let (rho1, rho2) = if self.leverage {
            (theta[7], theta[8])
        } else {
            (F::zero(), F::zero())
        };
        MultiParams {
            mu: theta[0],
            beta: theta[1],
            xi: theta[2],
            omega2: theta[3],
            w: theta[4],
            lambda1: theta[5],
            lambda2: theta[5] + theta[6],
            rho1,
            rho2,
        }
    }

    fn step_factors<F: Real>(&self, p: &MultiParams<F>, z1: F, z2: F, rng: &mut RngStream, out: &mut [F]) {
        let w2 = F::one() - p.w;
        let (v1, z1n, u1) = sv_factor_transition(p.w * p.xi, p.w * p.omega2, p.lambda1, z1, rng);
        let (v2, z2n, u2) = sv_factor_transition(w2 * p.xi, w2 * p.omega2, p.lambda2, z2, rng);
        out.copy_from_slice(&[v1, z1n, u1, v2, z2n, u2]);
    }
}

impl<F: Real> StateSpaceModel<F> for SvMultiModel {
    fn name(&self) -> &'static str {
        if self.leverage {
            "sv2-leverage"
        } else {
            "sv2"
        }
    }

    fn theta_names(&self) -> Vec<String> {
        let mut v: Vec<String> = ["mu", "beta", "xi", "omega2", "w", "lambda1", "lambda2_minus_lambda1"]
            .map(String::from)
            .to_vec();
        if self.leverage {
            v.extend(["rho1".to_string(), "rho2".to_string()]);
        }
        v
    }

    fn state_names(&self) -> Vec<String> {
        ["v1", "z1", "u1", "v2", "z2", "u2"].map(String::from).to_vec()
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn prior_sample(&self, rng: &mut RngStream) -> Vec<F> {
        self.priors
            .all(self.leverage)
            .iter()
            .map(|p| F::lit(p.sample(rng)))
            .collect()
    }

    fn prior_logpdf(&self, theta: &[F]) -> F {
        let p = self.params(theta);
        let support = p.xi > F::zero()
            && p.omega2 > F::zero()
            && p.w > F::zero()
            && p.w < F::one()
            && p.lambda1 > F::zero()
            && p.lambda2 > p.lambda1;
        if !support {
            return F::neg_infinity();
        }
        self.priors
            .all(self.leverage)
            .iter()
            .zip(theta)
            .map(|(pr, &v)| pr.logpdf(v))
            .sum()
    }

    fn transforms(&self) -> Vec<Transform> {
        self.priors
            .all(self.leverage)
            .iter()
            .map(|p| p.natural_transform())
            .collect()
    }

    fn init_sample(&self, theta: &[F], rng: &mut RngStream, out: &mut [F]) {
        let p = self.params(theta);
        let w2 = F::one() - p.w;
        let z1 = stationary_z(p.w * p.xi, p.w * p.omega2, rng);
        let z2 = stationary_z(w2 * p.xi, w2 * p.omega2, rng);
        self.step_factors(&p, z1, z2, rng, out);
    }

    fn transition_sample(&self, theta: &[F], prev: &[F], _t: usize, rng: &mut RngStream, out: &mut [F]) {
        let p = self.params(theta);
        self.step_factors(&p, prev[1], prev[4], rng, out);
    }

    fn obs_logpdf(&self, theta: &[F], x: &[F], y: &[F], _t: usize) -> F {
        let p = self.params(theta);
        let v = x[0] + x[3];
        if !(v > F::zero()) {
            return F::neg_infinity();
        }
        let compensator =
            p.xi * (p.w * p.rho1 * p.lambda1 + (F::one() - p.w) * p.rho2 * p.lambda2);
        let mean = p.mu + p.beta * v + p.rho1 * x[2] + p.rho2 * x[5] - compensator;
        normal_logpdf(y[0], mean, v)
    }

    fn obs_sample(&self, theta: &[F], x: &[F], _t: usize, rng: &mut RngStream) -> Vec<F> {
        let p = self.params(theta);
        let v = x[0] + x[3];
        let compensator =
            p.xi * (p.w * p.rho1 * p.lambda1 + (F::one() - p.w) * p.rho2 * p.lambda2);
        let mean = p.mu + p.beta * v + p.rho1 * x[2] + p.rho2 * x[5] - compensator;
        vec![mean + v.sqrt() * F::lit(rng.std_normal())]
    }
}
