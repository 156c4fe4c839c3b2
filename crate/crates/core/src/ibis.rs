//! IBIS: sequential importance sampling over theta with exact likelihood
//! increments and resample-move rejuvenation. The proposal fitting and MH
//! kernel here are shared with SMC².

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::Transform;
use crate::error::{Error, Result};
use crate::kalman::{kalman_step, KalmanState, LinearGaussian};
use crate::linalg::{mvn_logpdf_chol, Matrix};
use crate::models::{log_jacobian, to_constrained, to_unconstrained, Observation, StateSpaceModel};
use crate::rng::{resample_indices, tags, ResampleScheme, RngStream};
use crate::scalar::Real;
use crate::weights::{ess_from_log, log_sum_exp, normalize_log_weights};

/// Weighted theta-particles with one attachment each.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaCloud<F, A> {
    pub thetas: Vec<Vec<F>>,
    pub log_weights: Vec<F>,
    pub attachments: Vec<A>,
}

impl<F: Real, A> ThetaCloud<F, A> {
    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn ess(&self) -> Result<F> {
        ess_from_log(&self.log_weights)
    }

    pub fn normalized_weights(&self) -> Result<Vec<F>> {
        normalize_log_weights(&self.log_weights).map(|(w, _)| w)
    }

    /// Weighted mean and variance of theta component `i`.
    pub fn moments(&self, i: usize) -> Result<(F, F)> {
        weighted_moments(&self.thetas.iter().map(|t| t[i]).collect::<Vec<_>>(), &self.log_weights)
    }
}

/// Weighted mean and (plug-in) variance of `values` under `log_weights`.
pub fn weighted_moments<F: Real>(values: &[F], log_weights: &[F]) -> Result<(F, F)> {
    let (w, _) = normalize_log_weights(log_weights)?;
    let mean: F = values.iter().zip(&w).map(|(&v, &w)| w * v).sum();
    let var: F = values.iter().zip(&w).map(|(&v, &w)| w * (v - mean) * (v - mean)).sum();
    Ok((mean, var))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposalKind {
    #[default]
    IndependentGaussian,
    RandomWalk,
}

/// When to resample-move.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rejuvenation {
    /// When the ESS falls below `gamma * n_theta`.
    #[default]
    Adaptive,
    Never,
    Always,
}

/// Gaussian proposal on the unconstrained scale `phi = T(theta)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProposalFit<F> {
    pub kind: ProposalKind,
    pub mean: Vec<F>,
    pub cov: Matrix<F>,
    pub scale: F,
    chol: Matrix<F>,
    transforms: Vec<Transform>,
}

impl<F: Real> ProposalFit<F> {
    /// Independent proposals need a positive definite `cov`; random walks
    /// accept a semidefinite one (a zero matrix never moves).
    pub fn new(kind: ProposalKind, mean: Vec<F>, cov: Matrix<F>, transforms: Vec<Transform>) -> Result<Self> {
        let d = mean.len();
        let chol = match kind {
            ProposalKind::IndependentGaussian => cov.cholesky()?,
            ProposalKind::RandomWalk => cov.cholesky_psd()?,
        };
        let scale = match kind {
            ProposalKind::IndependentGaussian => F::one(),
            ProposalKind::RandomWalk => F::lit(2.38 * 2.38) / F::from_count(d.max(1)),
        };
        Ok(Self {
            kind,
            mean,
            cov,
            scale,
            chol,
            transforms,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    /// Draws a new theta given the current one.
    pub fn propose(&self, theta: &[F], rng: &mut RngStream) -> Vec<F> {
        let z: Vec<F> = (0..self.dim()).map(|_| F::lit(rng.std_normal())).collect();
        let lz = self.chol.matvec(&z);
        let phi: Vec<F> = match self.kind {
            ProposalKind::IndependentGaussian => self.mean.iter().zip(&lz).map(|(&m, &e)| m + e).collect(),
            ProposalKind::RandomWalk => {
                if lz.iter().all(|&e| e == F::zero()) {
                    // avoid a lossy round trip through the transforms
                    return theta.to_vec();
                }
                let s = self.scale.sqrt();
                to_unconstrained(&self.transforms, theta)
                    .iter()
                    .zip(&lz)
                    .map(|(&p, &e)| p + s * e)
                    .collect()
            }
        };
        to_constrained(&self.transforms, &phi)
    }

    fn phi_logpdf(&self, to: &[F], from: &[F]) -> F {
        match self.kind {
            ProposalKind::IndependentGaussian => mvn_logpdf_chol(to, &self.mean, &self.chol),
            ProposalKind::RandomWalk => {
                let s = self.scale.sqrt();
                let scaled = self.chol.scale(s);
                mvn_logpdf_chol(to, from, &scaled)
            }
        }
    }

    /// `log q(to | from)` as a density in theta.
    pub fn log_density(&self, to: &[F], from: &[F]) -> F {
        let pt = to_unconstrained(&self.transforms, to);
        let pf = to_unconstrained(&self.transforms, from);
        self.phi_logpdf(&pt, &pf) - log_jacobian(&self.transforms, &pt)
    }

    /// `log q(from | to) - log q(to | from)`, the proposal part of the MH
    /// ratio for a move `from -> to`.
    pub fn log_ratio(&self, from: &[F], to: &[F]) -> F {
        let pf = to_unconstrained(&self.transforms, from);
        let pt = to_unconstrained(&self.transforms, to);
        let jac = log_jacobian(&self.transforms, &pt) - log_jacobian(&self.transforms, &pf);
        match self.kind {
            ProposalKind::RandomWalk => jac,
            ProposalKind::IndependentGaussian => {
                mvn_logpdf_chol(&pf, &self.mean, &self.chol) - mvn_logpdf_chol(&pt, &self.mean, &self.chol) + jac
            }
        }
    }
}

/// Weighted mean and covariance of the cloud on the unconstrained scale.
/// A singular covariance gets `eps I` added, `eps = 1e-9 max(trace / d, 1)`,
/// increased tenfold until it factorises.
pub fn fit_proposal<F: Real>(
    thetas: &[Vec<F>],
    log_weights: &[F],
    transforms: &[Transform],
    kind: ProposalKind,
) -> Result<ProposalFit<F>> {
    let (w, _) = normalize_log_weights(log_weights)?;
    let d = transforms.len();
    let phis: Vec<Vec<F>> = thetas.iter().map(|t| to_unconstrained(transforms, t)).collect();
    let mut mean = vec![F::zero(); d];
    for (p, &wi) in phis.iter().zip(&w) {
        for (m, &v) in mean.iter_mut().zip(p) {
            *m += wi * v;
        }
    }
    let mut cov: Matrix<F> = Matrix::zeros(d, d);
    for (p, &wi) in phis.iter().zip(&w) {
        if wi == F::zero() {
            continue;
        }
        for i in 0..d {
            let di = p[i] - mean[i];
            for j in 0..=i {
                cov[(i, j)] += wi * di * (p[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[(j, i)] = cov[(i, j)];
        }
    }
    if cov.cholesky().is_err() {
        let base = F::lit(1e-9) * (cov.trace() / F::from_count(d.max(1))).max(F::one());
        let mut eps = base;
        loop {
            let jittered = cov.add(&Matrix::identity(d).scale(eps));
            if jittered.cholesky().is_ok() {
                cov = jittered;
                break;
            }
            eps *= F::lit(10.0);
            if !(eps < F::lit(1e6) * base.max(F::one())) {
                return Err(Error::Numerical("proposal covariance not factorisable".into()));
            }
        }
    }
    ProposalFit::new(kind, mean, cov, transforms.to_vec())
}

/// Result of a run of MH iterations.
#[derive(Clone, Debug, PartialEq)]
pub struct MhOutcome<F> {
    pub theta: Vec<F>,
    pub log_target: F,
    pub accepted: usize,
}

/// `n_moves` MH iterations from `theta` (whose log target is
/// `current_log_target`) with the given proposal.
pub fn mh_move<F: Real>(
    theta: &[F],
    current_log_target: F,
    mut log_target: impl FnMut(&[F]) -> F,
    proposal: &ProposalFit<F>,
    n_moves: usize,
    rng: &mut RngStream,
) -> MhOutcome<F> {
    let mut cur = theta.to_vec();
    let mut cur_lt = current_log_target;
    let mut accepted = 0;
    for _ in 0..n_moves {
        let prop = proposal.propose(&cur, rng);
        let u = F::lit(rng.uniform()).ln();
        if prop.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let lt = log_target(&prop);
        if lt == F::neg_infinity() || lt.is_nan() {
            continue;
        }
        let log_alpha = lt - cur_lt + proposal.log_ratio(&cur, &prop);
        if cur_lt == F::neg_infinity() || u < log_alpha {
            cur = prop;
            cur_lt = lt;
            accepted += 1;
        }
    }
    MhOutcome {
        theta: cur,
        log_target: cur_lt,
        accepted,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IbisConfig {
    pub n_theta: usize,
    pub gamma: f64,
    pub n_moves: usize,
    pub proposal: ProposalKind,
    pub rejuvenation: Rejuvenation,
}

impl Default for IbisConfig {
    fn default() -> Self {
        Self {
            n_theta: 1000,
            gamma: 0.5,
            n_moves: 1,
            proposal: ProposalKind::IndependentGaussian,
            rejuvenation: Rejuvenation::Adaptive,
        }
    }
}

/// Per-time summary of an IBIS step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IbisRecord {
    pub t: usize,
    pub ess: f64,
    pub resampled: bool,
    pub acceptance_rate: Option<f64>,
    pub log_increment: f64,
    pub log_evidence: f64,
}

/// IBIS sampler for models with exact likelihood increments.
pub struct Ibis<'m, F: Real, M: StateSpaceModel<F> + ?Sized> {
    model: &'m M,
    pub config: IbisConfig,
    root: RngStream,
    pub cloud: ThetaCloud<F, Option<KalmanState<F>>>,
    data: Vec<Observation<F>>,
    pub log_evidence: F,
    pub history: Vec<IbisRecord>,
}

impl<'m, F: Real, M: StateSpaceModel<F> + ?Sized> Ibis<'m, F, M> {
    /// `n_theta` draws from the prior.
    pub fn new(model: &'m M, config: IbisConfig, seed: u64) -> Self {
        let root = RngStream::new(seed);
        let prior = root.split(tags::PRIOR);
        let thetas = (0..config.n_theta)
            .map(|m| model.prior_sample(&mut prior.split(m as u64)))
            .collect();
        Self::with_root(model, config, root, thetas)
    }

    /// Starts from a given set of equally weighted thetas.
    pub fn from_thetas(model: &'m M, config: IbisConfig, seed: u64, thetas: Vec<Vec<F>>) -> Self {
        Self::with_root(model, config, RngStream::new(seed), thetas)
    }

    fn with_root(model: &'m M, mut config: IbisConfig, root: RngStream, thetas: Vec<Vec<F>>) -> Self {
        config.n_theta = thetas.len();
        let n = thetas.len();
        Self {
            model,
            config,
            root,
            cloud: ThetaCloud {
                thetas,
                log_weights: vec![F::zero(); n],
                attachments: vec![None; n],
            },
            data: Vec::new(),
            log_evidence: F::zero(),
            history: Vec::new(),
        }
    }

    pub fn t(&self) -> usize {
        self.data.len()
    }

    fn system(&self, theta: &[F]) -> Result<LinearGaussian<F>> {
        self.model
            .linear_gaussian(theta)
            .ok_or_else(|| Error::InvalidParameter(format!("model {} has no exact likelihood", self.model.name())))
    }

    /// Assimilates `y_t`.
    pub fn step(&mut self, y: Observation<F>) -> Result<()> {
        let t = self.data.len() + 1;
        self.model.check_observation(&y, t)?;
        let model = self.model;
        let updates: Vec<Result<(F, KalmanState<F>)>> = self
            .cloud
            .thetas
            .par_iter()
            .zip(self.cloud.attachments.par_iter())
            .zip(self.cloud.log_weights.par_iter())
            .map(|((theta, ks), &lw)| {
                let sys = model
                    .linear_gaussian(theta)
                    .ok_or_else(|| Error::InvalidParameter(format!("model {} has no exact likelihood", model.name())))?;
                let prev = ks.clone().unwrap_or_else(|| KalmanState::prior(&sys));
                if lw == F::neg_infinity() {
                    let mut next = prev;
                    next.t = t;
                    next.last_increment = F::neg_infinity();
                    return Ok((F::neg_infinity(), next));
                }
                let next = kalman_step(&prev, y.as_option(), &sys)?;
                Ok((next.last_increment, next))
            })
            .collect();
        let old_lw = self.cloud.log_weights.clone();
        for (m, up) in updates.into_iter().enumerate() {
            let (inc, ks) = up?;
            self.cloud.log_weights[m] += inc;
            self.cloud.attachments[m] = Some(ks);
        }
        let log_inc = log_sum_exp(&self.cloud.log_weights) - log_sum_exp(&old_lw);
        self.log_evidence += log_inc;
        self.data.push(y);
        let ess = self.cloud.ess()?;
        let trigger = match self.config.rejuvenation {
            Rejuvenation::Adaptive => ess < F::lit(self.config.gamma) * F::from_count(self.cloud.len()),
            Rejuvenation::Never => false,
            Rejuvenation::Always => true,
        };
        let acceptance_rate = if trigger { Some(self.rejuvenate()?) } else { None };
        self.history.push(IbisRecord {
            t,
            ess: ess.as_f64(),
            resampled: trigger,
            acceptance_rate,
            log_increment: log_inc.as_f64(),
            log_evidence: self.log_evidence.as_f64(),
        });
        Ok(())
    }

    pub fn run(&mut self, ys: &[Observation<F>]) -> Result<()> {
        for y in ys {
            self.step(y.clone())?;
        }
        Ok(())
    }

    /// Resample by weight, then move every particle with an MH kernel
    /// targeting `p(theta | y_{1:t})`. Returns the acceptance rate.
    pub fn rejuvenate(&mut self) -> Result<f64> {
        let t = self.t();
        let n = self.cloud.len();
        let transforms = self.model.transforms();
        let fit = fit_proposal(&self.cloud.thetas, &self.cloud.log_weights, &transforms, self.config.proposal)?;
        let w = self.cloud.normalized_weights()?;
        let idx = resample_indices(
            &w,
            n,
            ResampleScheme::Multinomial,
            &mut self.root.split(tags::RESAMPLE).split(t as u64),
        )?;
        let model = self.model;
        let data = &self.data;
        let refs: Vec<Option<&[F]>> = data.iter().map(|y| y.as_option()).collect();
        let log_target = |theta: &[F]| -> F {
            let lp = model.prior_logpdf(theta);
            if lp == F::neg_infinity() {
                return lp;
            }
            match model.exact_loglik(theta, data) {
                Some(Ok(ll)) => lp + ll,
                _ => F::neg_infinity(),
            }
        };
        let stream = self.root.split(tags::REJUVENATE).split(t as u64);
        let n_moves = self.config.n_moves;
        let moved: Vec<(Vec<F>, usize)> = idx
            .par_iter()
            .enumerate()
            .map(|(m, &a)| {
                let start = &self.cloud.thetas[a];
                let out = mh_move(start, log_target(start), log_target, &fit, n_moves, &mut stream.split(m as u64));
                (out.theta, out.accepted)
            })
            .collect();
        let mut accepted = 0;
        let mut thetas = Vec::with_capacity(n);
        let mut attachments = Vec::with_capacity(n);
        for (theta, acc) in moved {
            accepted += acc;
            let sys = self.system(&theta)?;
            let mut ks = KalmanState::prior(&sys);
            for y in &refs {
                ks = kalman_step(&ks, *y, &sys)?;
            }
            attachments.push(Some(ks));
            thetas.push(theta);
        }
        self.cloud = ThetaCloud {
            thetas,
            log_weights: vec![F::zero(); n],
            attachments,
        };
        Ok(accepted as f64 / (n * n_moves.max(1)) as f64)
    }
}
