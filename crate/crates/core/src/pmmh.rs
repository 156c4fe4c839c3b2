//! Batch particle-marginal Metropolis-Hastings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ibis::{fit_proposal, ProposalFit, ProposalKind};
use crate::linalg::Matrix;
use crate::models::{Observation, StateSpaceModel};
use crate::pf::{PfConfig, PfState};
use crate::rng::{tags, ResampleScheme, RngStream};
use crate::scalar::Real;
use crate::smc2::{pmmh_propose, PmmhDecision};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PmmhConfig {
    pub n_x: usize,
    pub n_iter: usize,
    /// Standard deviation of the initial random walk on each unconstrained
    /// component.
    pub init_scale: f64,
    /// Adapt the random-walk covariance from the chain during burn-in.
    pub adapt: bool,
    pub burn_in_fraction: f64,
    /// Iterations between covariance refits during burn-in.
    pub adapt_interval: usize,
    /// Prior draws tried before giving up on a finite starting estimate.
    pub init_attempts: usize,
    pub init_theta: Option<Vec<f64>>,
    pub scheme: ResampleScheme,
    /// Keep every proposal for later inspection.
    pub record_proposals: bool,
}

impl Default for PmmhConfig {
    fn default() -> Self {
        Self {
            n_x: 100,
            n_iter: 10_000,
            init_scale: 0.1,
            adapt: true,
            burn_in_fraction: 0.2,
            adapt_interval: 100,
            init_attempts: 100,
            init_theta: None,
            scheme: ResampleScheme::Multinomial,
            record_proposals: false,
        }
    }
}

impl PmmhConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if self.n_iter < 1 {
            return bad("n_iter must be at least 1");
        }
        if self.n_x < 1 {
            return bad("n_x must be at least 1");
        }
        if !(self.init_scale >= 0.0) {
            return bad("init_scale must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return bad("burn_in_fraction must lie in [0, 1)");
        }
        if self.init_attempts < 1 {
            return bad("init_attempts must be at least 1");
        }
        Ok(())
    }

    pub fn burn_in(&self) -> usize {
        (self.n_iter as f64 * self.burn_in_fraction).floor() as usize
    }
}

/// Proposal log entry, with the incumbent's values at the time.
#[derive(Clone, Debug, PartialEq)]
pub struct ProposalRecord<F> {
    pub iteration: usize,
    pub current: Vec<F>,
    pub current_log_prior: F,
    pub current_log_zhat: F,
    pub decision: PmmhDecision<F>,
    /// Whether the proposal had been refitted from the chain by then.
    pub adapted: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PmmhChain<F> {
    pub samples: Vec<Vec<F>>,
    pub log_zhats: Vec<F>,
    pub accepted: Vec<bool>,
    pub acceptance_count: usize,
    pub burn_in: usize,
    pub proposals: Vec<ProposalRecord<F>>,
    /// Proposal in use after burn-in.
    pub final_proposal: ProposalFit<F>,
}

impl<F: Real> PmmhChain<F> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.acceptance_count as f64 / self.samples.len() as f64
    }

    /// Samples after burn-in.
    pub fn kept(&self) -> &[Vec<F>] {
        &self.samples[self.burn_in..]
    }
}

fn initial_proposal<F: Real, M: StateSpaceModel<F> + ?Sized>(model: &M, scale: f64) -> Result<ProposalFit<F>> {
    let d = model.theta_dim();
    let var = F::lit(scale * scale);
    // undo the 2.38^2/d factor so that init_scale is the actual step size
    let c = F::lit(2.38 * 2.38) / F::from_count(d.max(1));
    let cov = Matrix::identity(d).scale(var / c);
    ProposalFit::new(ProposalKind::RandomWalk, vec![F::zero(); d], cov, model.transforms())
}

/// Runs a PMMH chain of `n_iter` iterations on `data`.
pub fn pmmh_run<F: Real, M: StateSpaceModel<F> + ?Sized>(
    model: &M,
    data: &[Observation<F>],
    config: &PmmhConfig,
    seed: u64,
) -> Result<PmmhChain<F>> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::NoData("pmmh needs at least one observation".into()));
    }
    for (k, y) in data.iter().enumerate() {
        model.check_observation(y, k + 1)?;
    }
    let root = RngStream::new(seed);
    let pf_config = PfConfig {
        n_x: config.n_x,
        scheme: config.scheme,
        store_trajectories: false,
    };
    let init = root.split(tags::INIT);
    let mut start = None;
    let mut last_reason = String::new();
    for attempt in 0..config.init_attempts {
        let stream = init.split(attempt as u64);
        let theta: Vec<F> = match &config.init_theta {
            Some(v) => v.iter().map(|&x| F::lit(x)).collect(),
            None => model.prior_sample(&mut stream.split(0)),
        };
        if theta.len() != model.theta_dim() {
            return Err(Error::InvalidParameter(format!(
                "initial theta has {} components, model has {}",
                theta.len(),
                model.theta_dim()
            )));
        }
        if model.prior_logpdf(&theta) == F::neg_infinity() {
            last_reason = "initial theta outside the prior support".into();
            continue;
        }
        let pf = PfState::run(model, &theta, data, pf_config, &stream.split(1));
        if pf.degenerate || !pf.log_zhat.is_finite() {
            last_reason = format!("likelihood estimate is zero at {:?}", theta.iter().map(|v| v.as_f64()).collect::<Vec<_>>());
            continue;
        }
        start = Some((theta, pf.log_zhat));
        break;
    }
    let (mut theta, mut log_zhat) = start.ok_or(Error::InitFailed {
        attempts: config.init_attempts,
        reason: last_reason,
    })?;
    let mut log_prior = model.prior_logpdf(&theta);

    let transforms = model.transforms();
    let mut proposal = initial_proposal(model, config.init_scale)?;
    let burn_in = config.burn_in();
    let moves = root.split(tags::REJUVENATE);
    let mut chain = PmmhChain {
        samples: Vec::with_capacity(config.n_iter),
        log_zhats: Vec::with_capacity(config.n_iter),
        accepted: Vec::with_capacity(config.n_iter),
        acceptance_count: 0,
        burn_in,
        proposals: Vec::new(),
        final_proposal: proposal.clone(),
    };
    let mut adapted = false;
    for i in 0..config.n_iter {
        if config.adapt && i < burn_in && i > 0 && i % config.adapt_interval.max(1) == 0 {
            let d = transforms.len();
            if i > 2 * d + 2 {
                let lw = vec![F::zero(); chain.samples.len()];
                if let Ok(fit) = fit_proposal(&chain.samples, &lw, &transforms, ProposalKind::RandomWalk) {
                    if fit.cov.trace() > F::zero() {
                        proposal = fit;
                        adapted = true;
                    }
                }
            }
        }
        let (decision, pf) = pmmh_propose(model, &theta, log_zhat, data, &proposal, pf_config, &moves.split(i as u64));
        if config.record_proposals {
            chain.proposals.push(ProposalRecord {
                iteration: i,
                current: theta.clone(),
                current_log_prior: log_prior,
                current_log_zhat: log_zhat,
                decision: decision.clone(),
                adapted,
            });
        }
        if let Some(pf) = pf {
            theta = decision.proposed;
            log_zhat = pf.log_zhat;
            log_prior = decision.log_prior;
            chain.acceptance_count += 1;
            chain.accepted.push(true);
        } else {
            chain.accepted.push(false);
        }
        chain.samples.push(theta.clone());
        chain.log_zhats.push(log_zhat);
    }
    chain.final_proposal = proposal;
    Ok(chain)
}
