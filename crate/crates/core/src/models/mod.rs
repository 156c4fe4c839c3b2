//! State-space model abstraction and the built-in models.

mod athletics;
mod lg;
mod sv;

pub use athletics::{
    athletics_obs_logpdf, athletics_obs_logpdf_direct, athletics_transition, beat_probability,
    AthleticsModel,
};
pub use lg::LgModel;
pub use sv::{
    sv1_obs_logpdf, sv1_transition, sv_factor_transition, Sv1Model, SvMultiModel, SvMultiPriors,
    SvPriors,
};

use serde::{Deserialize, Serialize};

use crate::dist::Transform;
use crate::error::{Error, Result};
use crate::kalman::{kalman_loglik, LinearGaussian};
use crate::rng::RngStream;
use crate::scalar::Real;

/// One observation `y_t`; `missing` marks a time index with no data.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation<F> {
    pub values: Vec<F>,
    pub missing: bool,
}

impl<F: Real> Observation<F> {
    pub fn new(values: Vec<F>) -> Self {
        Self {
            values,
            missing: false,
        }
    }

    pub fn scalar(y: F) -> Self {
        Self::new(vec![y])
    }

    pub fn missing(dim: usize) -> Self {
        Self {
            values: vec![F::nan(); dim],
            missing: true,
        }
    }

    pub fn as_option(&self) -> Option<&[F]> {
        if self.missing {
            None
        } else {
            Some(&self.values)
        }
    }
}

/// A state-space model given as samplers and log-density evaluators.
///
/// Only the transition needs to be simulable; its density is never
/// evaluated. `obs_logpdf` must return `-inf` (never NaN) outside the
/// observation support.
pub trait StateSpaceModel<F: Real>: Send + Sync {
    fn name(&self) -> &'static str;

    fn theta_names(&self) -> Vec<String>;

    fn theta_dim(&self) -> usize {
        self.theta_names().len()
    }

    fn state_names(&self) -> Vec<String>;

    fn state_dim(&self) -> usize {
        self.state_names().len()
    }

    fn obs_dim(&self) -> usize;

    fn prior_sample(&self, rng: &mut RngStream) -> Vec<F>;

    /// `log p(theta)`, `-inf` outside the support.
    fn prior_logpdf(&self, theta: &[F]) -> F;

    /// Per-component map to the unconstrained scale used by proposals.
    fn transforms(&self) -> Vec<Transform>;

    /// Draws `x_1` from its initial law into `out`.
    fn init_sample(&self, theta: &[F], rng: &mut RngStream, out: &mut [F]);

    /// Draws `x_{t+1}` given `x_t = prev` into `out`.
    fn transition_sample(&self, theta: &[F], prev: &[F], t: usize, rng: &mut RngStream, out: &mut [F]);

    /// `log g(y_t | x_t)`.
    fn obs_logpdf(&self, theta: &[F], x: &[F], y: &[F], t: usize) -> F;

    fn obs_sample(&self, theta: &[F], x: &[F], t: usize, rng: &mut RngStream) -> Vec<F>;

    fn check_observation(&self, y: &Observation<F>, t: usize) -> Result<()> {
        if !y.missing && y.values.len() != self.obs_dim() {
            return Err(Error::InvalidObservation {
                t,
                reason: format!("expected {} values, got {}", self.obs_dim(), y.values.len()),
            });
        }
        if !y.missing && y.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidObservation {
                t,
                reason: "non-finite value".into(),
            });
        }
        Ok(())
    }

    /// System matrices when the model is linear-Gaussian for this `theta`.
    fn linear_gaussian(&self, _theta: &[F]) -> Option<LinearGaussian<F>> {
        None
    }

    /// Exact `log p(y_{1:t} | theta)` for Kalman-tractable models.
    fn exact_loglik(&self, theta: &[F], ys: &[Observation<F>]) -> Option<Result<F>> {
        let sys = self.linear_gaussian(theta)?;
        let refs: Vec<Option<&[F]>> = ys.iter().map(|y| y.as_option()).collect();
        Some(kalman_loglik(&sys, &refs))
    }
}

/// Maps theta to the unconstrained proposal scale.
pub fn to_unconstrained<F: Real>(transforms: &[Transform], theta: &[F]) -> Vec<F> {
    transforms
        .iter()
        .zip(theta)
        .map(|(t, &v)| t.to_unconstrained(v))
        .collect()
}

pub fn to_constrained<F: Real>(transforms: &[Transform], phi: &[F]) -> Vec<F> {
    transforms
        .iter()
        .zip(phi)
        .map(|(t, &v)| t.to_constrained(v))
        .collect()
}

/// `log |d theta / d phi|` summed over components.
pub fn log_jacobian<F: Real>(transforms: &[Transform], phi: &[F]) -> F {
    transforms
        .iter()
        .zip(phi)
        .map(|(t, &v)| t.log_jacobian(v))
        .sum()
}

/// Forward simulation of states and observations for `t_len` steps.
pub fn simulate<F: Real, M: StateSpaceModel<F> + ?Sized>(
    model: &M,
    theta: &[F],
    t_len: usize,
    rng: &mut RngStream,
) -> (Vec<Vec<F>>, Vec<Observation<F>>) {
    let d = model.state_dim();
    let mut states = Vec::with_capacity(t_len);
    let mut obs = Vec::with_capacity(t_len);
    let mut x = vec![F::zero(); d];
    for t in 1..=t_len {
        let mut next = vec![F::zero(); d];
        if t == 1 {
            model.init_sample(theta, rng, &mut next);
        } else {
            model.transition_sample(theta, &x, t - 1, rng, &mut next);
        }
        x = next;
        obs.push(Observation::new(model.obs_sample(theta, &x, t, rng)));
        states.push(x.clone());
    }
    (states, obs)
}

/// Built-in models, selectable by name in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name")]
pub enum BuiltinModel {
    #[serde(rename = "lg")]
    Lg(LgModel),
    #[serde(rename = "sv1")]
    Sv1(Sv1Model),
    #[serde(rename = "sv2")]
    Sv2(SvMultiModel),
    #[serde(rename = "sv2-leverage")]
    Sv2Leverage(SvMultiModel),
    #[serde(rename = "athletics")]
    Athletics(AthleticsModel),
}

impl BuiltinModel {
    /// Model with default hyperparameters for a config name.
    pub fn default_for(name: &str) -> Option<Self> {
        Some(match name {
            "lg" => BuiltinModel::Lg(LgModel::default()),
            "sv1" => BuiltinModel::Sv1(Sv1Model::default()),
            "sv2" => BuiltinModel::Sv2(SvMultiModel::new(false)),
            "sv2-leverage" => BuiltinModel::Sv2Leverage(SvMultiModel::new(true)),
            "athletics" => BuiltinModel::Athletics(AthleticsModel::default()),
            _ => return None,
        })
    }

    /// Checks hyperparameters, and for the multi-factor variants that the
    /// leverage flag agrees with the selected name.
    pub fn validate(&self) -> Result<()> {
        match self {
            BuiltinModel::Lg(m) => m.validate(),
            BuiltinModel::Sv1(m) => m.priors.validate(),
            BuiltinModel::Sv2(m) | BuiltinModel::Sv2Leverage(m) => m.priors.validate(),
            BuiltinModel::Athletics(m) => m.validate(),
        }
    }

    /// Normalises the leverage flag of the multi-factor variants to the name.
    pub fn normalized(mut self) -> Self {
        match &mut self {
            BuiltinModel::Sv2(m) => m.leverage = false,
            BuiltinModel::Sv2Leverage(m) => m.leverage = true,
            _ => {}
        }
        self
    }

    fn inner<F: Real>(&self) -> &dyn StateSpaceModel<F> {
        match self {
            BuiltinModel::Lg(m) => m,
            BuiltinModel::Sv1(m) => m,
            BuiltinModel::Sv2(m) | BuiltinModel::Sv2Leverage(m) => m,
            BuiltinModel::Athletics(m) => m,
        }
    }
}

impl<F: Real> StateSpaceModel<F> for BuiltinModel {
    fn name(&self) -> &'static str {
        self.inner::<F>().name()
    }
    fn theta_names(&self) -> Vec<String> {
        self.inner::<F>().theta_names()
    }
    fn state_names(&self) -> Vec<String> {
        self.inner::<F>().state_names()
    }
    fn obs_dim(&self) -> usize {
        self.inner::<F>().obs_dim()
    }
    fn prior_sample(&self, rng: &mut RngStream) -> Vec<F> {
        self.inner::<F>().prior_sample(rng)
    }
    fn prior_logpdf(&self, theta: &[F]) -> F {
        self.inner::<F>().prior_logpdf(theta)
    }
    fn transforms(&self) -> Vec<Transform> {
        self.inner::<F>().transforms()
    }
    fn init_sample(&self, theta: &[F], rng: &mut RngStream, out: &mut [F]) {
        self.inner::<F>().init_sample(theta, rng, out)
    }
    fn transition_sample(&self, theta: &[F], prev: &[F], t: usize, rng: &mut RngStream, out: &mut [F]) {
        self.inner::<F>().transition_sample(theta, prev, t, rng, out)
    }
    fn obs_logpdf(&self, theta: &[F], x: &[F], y: &[F], t: usize) -> F {
        self.inner::<F>().obs_logpdf(theta, x, y, t)
    }
    fn obs_sample(&self, theta: &[F], x: &[F], t: usize, rng: &mut RngStream) -> Vec<F> {
        self.inner::<F>().obs_sample(theta, x, t, rng)
    }
    fn check_observation(&self, y: &Observation<F>, t: usize) -> Result<()> {
        self.inner::<F>().check_observation(y, t)
    }
    fn linear_gaussian(&self, theta: &[F]) -> Option<LinearGaussian<F>> {
        self.inner::<F>().linear_gaussian(theta)
    }
}
