//! SMC²: an SMC sampler over theta in which every particle carries its own
//! particle filter over the states.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ibis::{fit_proposal, ProposalFit, ProposalKind, Rejuvenation};
use crate::models::{Observation, StateSpaceModel};
use crate::pf::{PfConfig, PfState};
use crate::rng::{resample_indices, tags, ResampleScheme, RngStream};
use crate::scalar::Real;
use crate::weights::{ess_from_log, log_sum_exp, normalize_log_weights};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Smc2Config {
    pub n_theta: usize,
    /// Initial number of state particles per theta.
    pub n_x: usize,
    /// ESS threshold as a fraction of `n_theta`.
    pub gamma: f64,
    /// Acceptance rate below which `n_x` grows.
    pub alpha: f64,
    pub growth_factor: f64,
    pub n_x_max: usize,
    pub auto_nx: bool,
    pub proposal: ProposalKind,
    pub n_moves: usize,
    pub rejuvenation: Rejuvenation,
    pub store_trajectories: bool,
    /// Inner filter resampling scheme.
    pub scheme: ResampleScheme,
}

impl Default for Smc2Config {
    fn default() -> Self {
        Self {
            n_theta: 1000,
            n_x: 100,
            gamma: 0.5,
            alpha: 0.2,
            growth_factor: 2.0,
            n_x_max: 100_000,
            auto_nx: true,
            proposal: ProposalKind::IndependentGaussian,
            n_moves: 1,
            rejuvenation: Rejuvenation::Adaptive,
            store_trajectories: false,
            scheme: ResampleScheme::Multinomial,
        }
    }
}

impl Smc2Config {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if self.n_theta < 2 {
            return bad("n_theta must be at least 2");
        }
        if self.n_x < 1 {
            return bad("n_x must be at least 1");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.growth_factor > 1.0) {
            return bad("growth_factor must exceed 1");
        }
        if self.n_x_max < self.n_x {
            return bad("n_x_max must be at least n_x");
        }
        if self.n_moves < 1 {
            return bad("n_moves must be at least 1");
        }
        Ok(())
    }

    fn pf_config(&self, n_x: usize) -> PfConfig {
        PfConfig {
            n_x,
            scheme: self.scheme,
            store_trajectories: self.store_trajectories,
        }
    }
}

/// One outer particle.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaParticle<F> {
    pub theta: Vec<F>,
    pub log_weight: F,
    pub pf: PfState<F>,
}

impl<F: Real> ThetaParticle<F> {
    pub fn log_zhat(&self) -> F {
        self.pf.log_zhat
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub t: usize,
    /// ESS after the weight update, before any rejuvenation.
    pub ess: f64,
    /// ESS at the end of the step.
    pub ess_post: f64,
    pub resampled: bool,
    pub acceptance_rate: Option<f64>,
    pub n_x: usize,
    pub exchanged: bool,
    pub log_lhat_t: f64,
    pub cum_log_evidence: f64,
}

/// Weighted joint sample of theta and one selected state (or path) per
/// theta-particle.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedJointSample<F> {
    pub log_weights: Vec<F>,
    pub thetas: Vec<Vec<F>>,
    pub indices: Vec<usize>,
    pub states: Vec<Vec<F>>,
    pub trajectories: Option<Vec<Vec<Vec<F>>>>,
}

/// Bookkeeping for one PMMH proposal.
#[derive(Clone, Debug, PartialEq)]
pub struct PmmhDecision<F> {
    pub proposed: Vec<F>,
    /// `log p(θ̃)`, `-inf` off the prior support.
    pub log_prior: F,
    /// `log Ẑ̃`, `-inf` when not run or degenerate.
    pub log_zhat: F,
    /// `log q(θ | θ̃) - log q(θ̃ | θ)`.
    pub log_q_ratio: F,
    pub log_alpha: F,
    pub log_u: F,
    pub accepted: bool,
}

/// Log acceptance ratio from its parts; `-inf` for an impossible proposal,
/// `+inf` when the incumbent estimate is zero.
pub fn pmmh_log_alpha<F: Real>(lp_cur: F, lz_cur: F, lp_new: F, lz_new: F, log_q_ratio: F) -> F {
    if !(lp_new > F::neg_infinity() && lz_new > F::neg_infinity()) {
        return F::neg_infinity();
    }
    if lz_cur == F::neg_infinity() || lp_cur == F::neg_infinity() {
        return F::infinity();
    }
    lp_new + lz_new - lp_cur - lz_cur + log_q_ratio
}

/// Proposes `θ̃`, runs a new filter on the whole data and takes the MH
/// decision. `rng.split(0)` drives the proposal, `rng.split(1)` the new
/// filter and `rng.split(2)` the uniform. The filter is returned on
/// acceptance.
pub fn pmmh_propose<F: Real, M: StateSpaceModel<F> + ?Sized>(
    model: &M,
    theta: &[F],
    log_zhat: F,
    data: &[Observation<F>],
    proposal: &ProposalFit<F>,
    pf_config: PfConfig,
    rng: &RngStream,
) -> (PmmhDecision<F>, Option<PfState<F>>) {
    let prop = proposal.propose(theta, &mut rng.split(0));
    let log_u = F::lit(rng.split(2).uniform()).ln();
    let finite = prop.iter().all(|v| v.is_finite());
    let log_prior = if finite { model.prior_logpdf(&prop) } else { F::neg_infinity() };
    let log_prior = if log_prior.is_nan() { F::neg_infinity() } else { log_prior };
    let mut pf = None;
    let mut log_zhat_new = F::neg_infinity();
    let mut log_q_ratio = F::zero();
    if log_prior > F::neg_infinity() {
        let run = PfState::run(model, &prop, data, pf_config, &rng.split(1));
        if !run.degenerate && run.log_zhat.is_finite() {
            log_zhat_new = run.log_zhat;
            pf = Some(run);
        }
        log_q_ratio = proposal.log_ratio(theta, &prop);
    }
    let lp_cur = model.prior_logpdf(theta);
    let log_alpha = pmmh_log_alpha(lp_cur, log_zhat, log_prior, log_zhat_new, log_q_ratio);
    let accepted = log_u < log_alpha;
    let decision = PmmhDecision {
        proposed: prop,
        log_prior,
        log_zhat: log_zhat_new,
        log_q_ratio,
        log_alpha,
        log_u,
        accepted,
    };
    (decision, if accepted { pf } else { None })
}

/// One PMMH update of a particle: propose, run a new filter on the whole
/// data, accept with probability
/// `1 ∧ p(θ̃) Ẑ̃ q(θ | θ̃) / [p(θ) Ẑ q(θ̃ | θ)]`. On acceptance θ and the
/// filter are replaced together; the weight is kept.
pub fn pmmh_move<F: Real, M: StateSpaceModel<F> + ?Sized>(
    model: &M,
    particle: &ThetaParticle<F>,
    data: &[Observation<F>],
    proposal: &ProposalFit<F>,
    pf_config: PfConfig,
    rng: &RngStream,
) -> (ThetaParticle<F>, bool) {
    let (decision, pf) = pmmh_propose(model, &particle.theta, particle.pf.log_zhat, data, proposal, pf_config, rng);
    match pf {
        Some(pf) => (
            ThetaParticle {
                theta: decision.proposed,
                log_weight: particle.log_weight,
                pf,
            },
            true,
        ),
        None => (particle.clone(), false),
    }
}

pub struct Smc2Sampler<'m, F: Real, M: StateSpaceModel<F> + ?Sized> {
    model: &'m M,
    config: Smc2Config,
    root: RngStream,
    particles: Vec<ThetaParticle<F>>,
    n_x: usize,
    data: Vec<Observation<F>>,
    log_evidence: F,
    diagnostics: Vec<StepDiagnostics>,
    exchanges: u64,
}

impl<'m, F: Real, M: StateSpaceModel<F> + ?Sized> Smc2Sampler<'m, F, M> {
    /// `n_theta` draws from the prior; filters are created with the first
    /// observation.
    pub fn new(model: &'m M, config: Smc2Config, seed: u64) -> Result<Self> {
        let root = RngStream::new(seed);
        let prior = root.split(tags::PRIOR);
        let thetas = (0..config.n_theta)
            .map(|m| model.prior_sample(&mut prior.split(m as u64)))
            .collect();
        Self::with_root(model, config, root, thetas)
    }

    /// Starts from given thetas (equal weights).
    pub fn with_thetas(model: &'m M, config: Smc2Config, seed: u64, thetas: Vec<Vec<F>>) -> Result<Self> {
        Self::with_root(model, config, RngStream::new(seed), thetas)
    }

    fn with_root(model: &'m M, mut config: Smc2Config, root: RngStream, thetas: Vec<Vec<F>>) -> Result<Self> {
        config.n_theta = thetas.len();
        config.validate()?;
        let d = model.theta_dim();
        if let Some(bad) = thetas.iter().find(|t| t.len() != d) {
            return Err(Error::InvalidParameter(format!("theta of length {} for a {d}-dimensional model", bad.len())));
        }
        let n_x = config.n_x;
        let particles = thetas
            .into_iter()
            .map(|theta| ThetaParticle {
                pf: PfState::placeholder(&theta, config.pf_config(n_x)),
                theta,
                log_weight: F::zero(),
            })
            .collect();
        Ok(Self {
            model,
            config,
            root,
            particles,
            n_x,
            data: Vec::new(),
            log_evidence: F::zero(),
            diagnostics: Vec::new(),
            exchanges: 0,
        })
    }

    pub fn config(&self) -> &Smc2Config {
        &self.config
    }

    pub fn model(&self) -> &'m M {
        self.model
    }

    pub fn t(&self) -> usize {
        self.data.len()
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn particles(&self) -> &[ThetaParticle<F>] {
        &self.particles
    }

    pub fn data(&self) -> &[Observation<F>] {
        &self.data
    }

    pub fn log_evidence(&self) -> F {
        self.log_evidence
    }

    pub fn diagnostics(&self) -> &[StepDiagnostics] {
        &self.diagnostics
    }

    pub fn log_weights(&self) -> Vec<F> {
        self.particles.iter().map(|p| p.log_weight).collect()
    }

    pub fn thetas(&self) -> Vec<Vec<F>> {
        self.particles.iter().map(|p| p.theta.clone()).collect()
    }

    pub fn ess(&self) -> Result<F> {
        ess_from_log(&self.log_weights())
    }

    /// Weighted mean and variance of theta component `i`.
    pub fn moments(&self, i: usize) -> Result<(F, F)> {
        let values: Vec<F> = self.particles.iter().map(|p| p.theta[i]).collect();
        crate::ibis::weighted_moments(&values, &self.log_weights())
    }

    /// Base stream of the filter attached to particle `m`; time `t` uses
    /// `propagation_stream(m).split(t)`.
    pub fn propagation_stream(&self, m: usize) -> RngStream {
        self.root.split(tags::PROPAGATE).split(m as u64)
    }

    /// Default stream for [`select_trajectories`](Self::select_trajectories) at the current time.
    pub fn selection_stream(&self) -> RngStream {
        self.root.split(tags::SELECT).split(self.t() as u64)
    }

    /// Assimilates `y_t` with the weight update only (no rejuvenation).
    /// Returns `log L_t`.
    pub fn advance(&mut self, y: Observation<F>) -> Result<F> {
        let t = self.t() + 1;
        self.model.check_observation(&y, t)?;
        let model = self.model;
        let prop = self.root.split(tags::PROPAGATE);
        let old_lw = self.log_weights();
        self.particles.par_iter_mut().enumerate().for_each(|(m, p)| {
            let mut rng = prop.split(m as u64).split(t as u64);
            if t == 1 {
                p.pf = PfState::init(model, &p.theta, &y, p.pf.config, &mut rng);
            } else {
                p.pf.step(model, &y, &mut rng);
            }
            let inc = p.pf.last_log_increment;
            p.log_weight = if p.log_weight == F::neg_infinity() || inc.is_nan() {
                F::neg_infinity()
            } else {
                p.log_weight + inc
            };
        });
        self.data.push(y);
        let new_lw = self.log_weights();
        if new_lw.iter().all(|&w| w == F::neg_infinity()) {
            return Err(Error::AllFiltersDegenerate { t });
        }
        let log_l = log_sum_exp(&new_lw) - log_sum_exp(&old_lw);
        self.log_evidence += log_l;
        Ok(log_l)
    }

    /// One full step: weight update, then resample-move if the ESS
    /// criterion (or policy) says so, then the `n_x` check.
    pub fn step(&mut self, y: Observation<F>) -> Result<&StepDiagnostics> {
        let log_l = self.advance(y)?;
        let ess = self.ess()?;
        let trigger = match self.config.rejuvenation {
            Rejuvenation::Adaptive => ess < F::lit(self.config.gamma) * F::from_count(self.particles.len()),
            Rejuvenation::Never => false,
            Rejuvenation::Always => true,
        };
        let mut acceptance_rate = None;
        let mut exchanged = false;
        if trigger {
            let acc = self.rejuvenate()?;
            acceptance_rate = Some(acc);
            if self.config.auto_nx {
                exchanged = self.auto_nx_check(acc)?;
            }
        }
        let ess_post = self.ess()?;
        self.diagnostics.push(StepDiagnostics {
            t: self.t(),
            ess: ess.as_f64(),
            ess_post: ess_post.as_f64(),
            resampled: trigger,
            acceptance_rate,
            n_x: self.n_x,
            exchanged,
            log_lhat_t: log_l.as_f64(),
            cum_log_evidence: self.log_evidence.as_f64(),
        });
        Ok(self.diagnostics.last().expect("just pushed"))
    }

    pub fn run(&mut self, ys: &[Observation<F>]) -> Result<()> {
        for y in ys {
            self.step(y.clone())?;
        }
        Ok(())
    }

    /// Proposal fitted on the current weighted cloud.
    pub fn fit_proposal(&self) -> Result<ProposalFit<F>> {
        fit_proposal(&self.thetas(), &self.log_weights(), &self.model.transforms(), self.config.proposal)
    }

    /// Resample-move with the fitted proposal. Returns the acceptance rate.
    pub fn rejuvenate(&mut self) -> Result<f64> {
        let fit = self.fit_proposal()?;
        self.rejuvenate_with(&fit)
    }

    /// Resample-move with a given proposal.
    pub fn rejuvenate_with(&mut self, proposal: &ProposalFit<F>) -> Result<f64> {
        let t = self.t() as u64;
        let n = self.particles.len();
        let (w, _) = normalize_log_weights(&self.log_weights())?;
        let idx = resample_indices(&w, n, ResampleScheme::Multinomial, &mut self.root.split(tags::RESAMPLE).split(t))?;
        let stream = self.root.split(tags::REJUVENATE).split(t);
        let pf_config = self.config.pf_config(self.n_x);
        let n_moves = self.config.n_moves;
        let (model, data, old) = (self.model, &self.data, &self.particles);
        let moved: Vec<(ThetaParticle<F>, usize)> = idx
            .par_iter()
            .enumerate()
            .map(|(m, &a)| {
                let mut p = old[a].clone();
                p.log_weight = F::zero();
                let mut acc = 0;
                for k in 0..n_moves {
                    let rng = stream.split(m as u64).split(k as u64);
                    let (next, ok) = pmmh_move(model, &p, data, proposal, pf_config, &rng);
                    p = next;
                    acc += ok as usize;
                }
                (p, acc)
            })
            .collect();
        let accepted: usize = moved.iter().map(|(_, a)| a).sum();
        self.particles = moved.into_iter().map(|(p, _)| p).collect();
        Ok(accepted as f64 / (n * n_moves) as f64)
    }

    /// Replaces every filter by a fresh one with `new_nx` particles run on
    /// `y_{1:t}`, multiplying each weight by `Ẑ_new / Ẑ_old`.
    pub fn exchange(&mut self, new_nx: usize) -> Result<()> {
        let base = self.root.split(tags::EXCHANGE).split(self.t() as u64).split(self.exchanges);
        self.exchange_with_streams(new_nx, |m| base.split(m as u64))
    }

    /// [`exchange`](Self::exchange) with caller-chosen base streams for the
    /// new filters.
    pub fn exchange_with_streams(&mut self, new_nx: usize, stream: impl Fn(usize) -> RngStream + Sync) -> Result<()> {
        if new_nx < 1 {
            return Err(Error::InvalidParameter("new n_x must be at least 1".into()));
        }
        if self.data.is_empty() {
            return Err(Error::NoData("exchange before the first observation".into()));
        }
        let pf_config = self.config.pf_config(new_nx);
        let (model, data) = (self.model, &self.data);
        self.particles.par_iter_mut().enumerate().for_each(|(m, p)| {
            let pf = PfState::run(model, &p.theta, data, pf_config, &stream(m));
            p.log_weight = if p.log_weight == F::neg_infinity() || pf.degenerate {
                F::neg_infinity()
            } else {
                p.log_weight + pf.log_zhat - p.pf.log_zhat
            };
            p.pf = pf;
        });
        self.n_x = new_nx;
        self.exchanges += 1;
        if self.particles.iter().all(|p| p.log_weight == F::neg_infinity()) {
            return Err(Error::AllFiltersDegenerate { t: self.t() });
        }
        Ok(())
    }

    /// Grows `n_x` by the growth factor when `acceptance_rate < alpha`.
    /// Returns whether an exchange took place.
    pub fn auto_nx_check(&mut self, acceptance_rate: f64) -> Result<bool> {
        if !(acceptance_rate < self.config.alpha) {
            return Ok(false);
        }
        if self.n_x >= self.config.n_x_max {
            warn!(
                "acceptance rate {acceptance_rate:.3} below {} but n_x is at its cap {}",
                self.config.alpha, self.config.n_x_max
            );
            return Ok(false);
        }
        let grown = (self.n_x as f64 * self.config.growth_factor).ceil() as usize;
        let new_nx = grown.max(self.n_x + 1).min(self.config.n_x_max);
        self.exchange(new_nx)?;
        Ok(true)
    }

    /// Draws `n*(m) ~ M(W^{1:N_x, m})` for every theta-particle, using
    /// `base.split(m)`. With `paths`, also returns the full state paths.
    pub fn select_trajectories(&self, base: &RngStream, paths: bool) -> Result<WeightedJointSample<F>> {
        if paths && !self.config.store_trajectories {
            return Err(Error::TrajectoriesNotStored);
        }
        let picks: Vec<Result<(usize, Vec<F>, Option<Vec<Vec<F>>>)>> = self
            .particles
            .par_iter()
            .enumerate()
            .map(|(m, p)| {
                let n = resample_indices(p.pf.norm_weights(), 1, ResampleScheme::Multinomial, &mut base.split(m as u64))?[0];
                let path = if paths { Some(p.pf.trajectory(n)?) } else { None };
                Ok((n, p.pf.particle(n).to_vec(), path))
            })
            .collect();
        let mut indices = Vec::with_capacity(picks.len());
        let mut states = Vec::with_capacity(picks.len());
        let mut trajectories = paths.then(Vec::new);
        for r in picks {
            let (n, x, path) = r?;
            indices.push(n);
            states.push(x);
            if let (Some(all), Some(path)) = (trajectories.as_mut(), path) {
                all.push(path);
            }
        }
        Ok(WeightedJointSample {
            log_weights: self.log_weights(),
            thetas: self.thetas(),
            indices,
            states,
            trajectories,
        })
    }

    /// `sum_m ω^m sum_n W^{n,m} h(θ^m, x^{n,m}) / sum_m ω^m`.
    pub fn rao_blackwell_estimate(&self, h: impl Fn(&[F], &[F]) -> F + Sync) -> Result<F> {
        let (w, _) = normalize_log_weights(&self.log_weights())?;
        Ok(self
            .particles
            .iter()
            .zip(&w)
            .filter(|(_, &wm)| wm > F::zero())
            .map(|(p, &wm)| wm * p.pf.weighted_sum(|x| h(&p.theta, x)))
            .sum())
    }
}
