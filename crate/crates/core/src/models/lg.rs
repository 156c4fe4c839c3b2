use serde::{Deserialize, Serialize};

use super::StateSpaceModel;
use crate::dist::{normal_logpdf, ParamSpec, Prior, Transform};
use crate::error::{Error, Result};
use crate::kalman::LinearGaussian;
use crate::linalg::Matrix;
use crate::rng::RngStream;
use crate::scalar::Real;

/// Univariate linear-Gaussian model
///
/// ```text
/// x_1 ~ N(0, sigma^2 / (1 - rho^2)),  x_{t+1} = rho x_t + sigma eps_t,  y_t = x_t + tau eta_t
/// ```
///
/// Each of `rho`, `sigma`, `tau` is either fixed or free; free components
/// make up theta in that order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LgModel {
    pub rho: ParamSpec,
    pub sigma: ParamSpec,
    pub tau: ParamSpec,
}

impl Default for LgModel {
    fn default() -> Self {
        Self {
            rho: ParamSpec::Free(Prior::Uniform { lo: -1.0, hi: 1.0 }),
            sigma: ParamSpec::fixed(1.0),
            tau: ParamSpec::fixed(1.0),
        }
    }
}

const NAMES: [&str; 3] = ["rho", "sigma", "tau"];

impl LgModel {
    pub fn new(rho: ParamSpec, sigma: ParamSpec, tau: ParamSpec) -> Self {
        Self { rho, sigma, tau }
    }

    /// All three parameters fixed: theta is empty (a point-mass prior).
    pub fn fixed(rho: f64, sigma: f64, tau: f64) -> Self {
        Self::new(ParamSpec::fixed(rho), ParamSpec::fixed(sigma), ParamSpec::fixed(tau))
    }

    fn specs(&self) -> [&ParamSpec; 3] {
        [&self.rho, &self.sigma, &self.tau]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, spec) in NAMES.iter().zip(self.specs()) {
            match *spec {
                ParamSpec::Free(p) => p.validate()?,
                ParamSpec::Fixed { fixed } => {
                    let ok = if *name == "rho" { fixed.abs() < 1.0 } else { fixed > 0.0 };
                    if !ok {
                        return Err(Error::InvalidParameter(format!("lg {name} = {fixed}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// `(rho, sigma, tau)` from theta and the fixed values.
    pub fn params<F: Real>(&self, theta: &[F]) -> (F, F, F) {
        let mut it = theta.iter();
        let mut get = |s: &ParamSpec| match *s {
            ParamSpec::Fixed { fixed } => F::lit(fixed),
            ParamSpec::Free(_) => *it.next().expect("theta too short for lg model"),
        };
        let rho = get(&self.rho);
        let sigma = get(&self.sigma);
        let tau = get(&self.tau);
        (rho, sigma, tau)
    }

    /// Theta vector from full `(rho, sigma, tau)`, keeping the free ones.
    pub fn theta_from<F: Real>(&self, rho: F, sigma: F, tau: F) -> Vec<F> {
        self.specs()
            .iter()
            .zip([rho, sigma, tau])
            .filter(|(s, _)| s.is_free())
            .map(|(_, v)| v)
            .collect()
    }
}

impl<F: Real> StateSpaceModel<F> for LgModel {
    fn name(&self) -> &'static str {
        "lg"
    }

    fn theta_names(&self) -> Vec<String> {
        NAMES
            .iter()
            .zip(self.specs())
            .filter(|(_, s)| s.is_free())
            .map(|(n, _)| n.to_string())
            .collect()
    }

    fn state_names(&self) -> Vec<String> {
        vec!["x".into()]
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn prior_sample(&self, rng: &mut RngStream) -> Vec<F> {
        self.specs()
            .iter()
            .filter_map(|s| match s {
                ParamSpec::Free(p) => Some(F::lit(p.sample(rng))),
                ParamSpec::Fixed { .. } => None,
            })
            .collect()
    }

    fn prior_logpdf(&self, theta: &[F]) -> F {
        let (rho, sigma, tau) = self.params(theta);
        if !(rho.abs() < F::one() && sigma > F::zero() && tau > F::zero()) {
            return F::neg_infinity();
        }
        let mut it = theta.iter();
        self.specs()
            .iter()
            .filter_map(|s| match s {
                ParamSpec::Free(p) => Some(p.logpdf(*it.next().unwrap())),
                ParamSpec::Fixed { .. } => None,
            })
            .sum()
    }

    fn transforms(&self) -> Vec<Transform> {
        self.specs()
            .iter()
            .filter_map(|s| match s {
                ParamSpec::Free(p) => Some(p.natural_transform()),
                ParamSpec::Fixed { .. } => None,
            })
            .collect()
    }

    fn init_sample(&self, theta: &[F], rng: &mut RngStream, out: &mut [F]) {
        let (rho, sigma, _) = self.params(theta);
        let sd = sigma / (F::one() - rho * rho).sqrt();
        out[0] = sd * F::lit(rng.std_normal());
    }

    fn transition_sample(&self, theta: &[F], prev: &[F], _t: usize, rng: &mut RngStream, out: &mut [F]) {
        let (rho, sigma, _) = self.params(theta);
        out[0] = rho * prev[0] + sigma * F::lit(rng.std_normal());
    }

    fn obs_logpdf(&self, theta: &[F], x: &[F], y: &[F], _t: usize) -> F {
        let (_, _, tau) = self.params(theta);
        normal_logpdf(y[0], x[0], tau * tau)
    }

    fn obs_sample(&self, theta: &[F], x: &[F], _t: usize, rng: &mut RngStream) -> Vec<F> {
        let (_, _, tau) = self.params(theta);
        vec![x[0] + tau * F::lit(rng.std_normal())]
    }

    fn linear_gaussian(&self, theta: &[F]) -> Option<LinearGaussian<F>> {
        let (rho, sigma, tau) = self.params(theta);
        let q = sigma * sigma;
        Some(LinearGaussian {
            f: Matrix::from_rows(&[&[rho]]),
            q: Matrix::from_rows(&[&[q]]),
            h: Matrix::from_rows(&[&[F::one()]]),
            r: Matrix::from_rows(&[&[tau * tau]]),
            m0: vec![F::zero()],
            p0: Matrix::from_rows(&[&[q / (F::one() - rho * rho)]]),
        })
    }
}
