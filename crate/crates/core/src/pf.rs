//! Bootstrap particle filter with a running unbiased likelihood estimate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Observation, StateSpaceModel};
use crate::rng::{resample_indices, ResampleScheme, RngStream};
use crate::scalar::Real;
use crate::weights::{log_mean_exp, normalize_log_weights};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PfConfig {
    pub n_x: usize,
    pub scheme: ResampleScheme,
    pub store_trajectories: bool,
}

impl PfConfig {
    pub fn new(n_x: usize) -> Self {
        Self {
            n_x,
            scheme: ResampleScheme::Multinomial,
            store_trajectories: false,
        }
    }

    pub fn with_store(mut self, store: bool) -> Self {
        self.store_trajectories = store;
        self
    }

    pub fn with_scheme(mut self, scheme: ResampleScheme) -> Self {
        self.scheme = scheme;
        self
    }
}

/// Full particle history: `states[s]` holds the flattened particles at
/// time `s + 1`, `ancestors[s]` the parents (at time `s + 1`) of the
/// particles at time `s + 2`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryStore<F> {
    pub states: Vec<Vec<F>>,
    pub ancestors: Vec<Vec<usize>>,
}

/// One inner filter for a fixed theta.
#[derive(Clone, Debug, PartialEq)]
pub struct PfState<F> {
    pub theta: Vec<F>,
    pub config: PfConfig,
    dim: usize,
    particles: Vec<F>,
    norm_weights: Vec<F>,
    pub log_zhat: F,
    pub last_log_increment: F,
    pub t: usize,
    pub degenerate: bool,
    store: Option<TrajectoryStore<F>>,
}

impl<F: Real> PfState<F> {
    /// Draws `x_1` from its initial law and weights by `g(y_1 | x_1)`.
    /// An all-zero weight vector marks the filter degenerate
    /// (`log_zhat = -inf`) instead of failing.
    pub fn init<M: StateSpaceModel<F> + ?Sized>(
        model: &M,
        theta: &[F],
        y: &Observation<F>,
        config: PfConfig,
        rng: &mut RngStream,
    ) -> Self {
        assert!(config.n_x >= 1, "n_x must be positive");
        let dim = model.state_dim();
        let mut particles = vec![F::zero(); config.n_x * dim];
        for chunk in particles.chunks_mut(dim) {
            model.init_sample(theta, rng, chunk);
        }
        let mut pf = Self {
            theta: theta.to_vec(),
            config,
            dim,
            particles,
            norm_weights: vec![F::one() / F::from_count(config.n_x); config.n_x],
            log_zhat: F::zero(),
            last_log_increment: F::zero(),
            t: 1,
            degenerate: false,
            store: config.store_trajectories.then(TrajectoryStore::default),
        };
        pf.reweight(model, y);
        if let Some(store) = pf.store.as_mut() {
            store.states.push(pf.particles.clone());
        }
        pf
    }

    /// A filter that has seen no data (`t = 0`).
    pub fn placeholder(theta: &[F], config: PfConfig) -> Self {
        Self {
            theta: theta.to_vec(),
            config,
            dim: 0,
            particles: Vec::new(),
            norm_weights: Vec::new(),
            log_zhat: F::zero(),
            last_log_increment: F::zero(),
            t: 0,
            degenerate: false,
            store: None,
        }
    }

    /// Resample, propagate through the transition and reweight at `t + 1`.
    pub fn step<M: StateSpaceModel<F> + ?Sized>(&mut self, model: &M, y: &Observation<F>, rng: &mut RngStream) {
        let n = self.config.n_x;
        if self.degenerate {
            self.t += 1;
            self.last_log_increment = F::neg_infinity();
            if let Some(store) = self.store.as_mut() {
                store.ancestors.push((0..n).collect());
                store.states.push(self.particles.clone());
            }
            return;
        }
        let parents = resample_indices(&self.norm_weights, n, self.config.scheme, rng)
            .expect("normalized weights of a live filter");
        let mut next = vec![F::zero(); n * self.dim];
        for (k, &a) in parents.iter().enumerate() {
            let prev = &self.particles[a * self.dim..(a + 1) * self.dim];
            model.transition_sample(&self.theta, prev, self.t, rng, &mut next[k * self.dim..(k + 1) * self.dim]);
        }
        self.particles = next;
        self.t += 1;
        self.reweight(model, y);
        if let Some(store) = self.store.as_mut() {
            store.ancestors.push(parents);
            store.states.push(self.particles.clone());
        }
    }

    fn reweight<M: StateSpaceModel<F> + ?Sized>(&mut self, model: &M, y: &Observation<F>) {
        let n = self.config.n_x;
        let inc = match y.as_option() {
            None => {
                self.norm_weights = vec![F::one() / F::from_count(n); n];
                F::zero()
            }
            Some(values) => {
                let logw: Vec<F> = self
                    .particles
                    .chunks(self.dim)
                    .map(|x| {
                        let v = model.obs_logpdf(&self.theta, x, values, self.t);
                        if v.is_nan() {
                            F::neg_infinity()
                        } else {
                            v
                        }
                    })
                    .collect();
                match normalize_log_weights(&logw) {
                    Ok((w, _)) => {
                        self.norm_weights = w;
                        log_mean_exp(&logw)
                    }
                    Err(_) => {
                        self.degenerate = true;
                        self.norm_weights = vec![F::one() / F::from_count(n); n];
                        F::neg_infinity()
                    }
                }
            }
        };
        self.last_log_increment = inc;
        self.log_zhat = if self.t == 1 { inc } else { self.log_zhat + inc };
    }

    /// Runs the filter over `ys`, using `base.split(t)` at time `t`.
    pub fn run<M: StateSpaceModel<F> + ?Sized>(
        model: &M,
        theta: &[F],
        ys: &[Observation<F>],
        config: PfConfig,
        base: &RngStream,
    ) -> Self {
        assert!(!ys.is_empty(), "at least one observation is required");
        let mut pf = Self::init(model, theta, &ys[0], config, &mut base.split(1));
        for (k, y) in ys.iter().enumerate().skip(1) {
            pf.step(model, y, &mut base.split(k as u64 + 1));
        }
        pf
    }

    pub fn n_x(&self) -> usize {
        self.config.n_x
    }

    pub fn state_dim(&self) -> usize {
        self.dim
    }

    pub fn particle(&self, n: usize) -> &[F] {
        &self.particles[n * self.dim..(n + 1) * self.dim]
    }

    pub fn particles(&self) -> &[F] {
        &self.particles
    }

    pub fn norm_weights(&self) -> &[F] {
        &self.norm_weights
    }

    /// `sum_n W^n h(x^n)`.
    pub fn weighted_sum(&self, mut h: impl FnMut(&[F]) -> F) -> F {
        self.particles
            .chunks(self.dim)
            .zip(&self.norm_weights)
            .map(|(x, &w)| if w > F::zero() { w * h(x) } else { F::zero() })
            .sum()
    }

    pub fn filtered_mean(&self) -> Vec<F> {
        (0..self.dim).map(|i| self.weighted_sum(|x| x[i])).collect()
    }

    pub fn has_trajectories(&self) -> bool {
        self.store.is_some()
    }

    pub fn trajectory_store(&self) -> Option<&TrajectoryStore<F>> {
        self.store.as_ref()
    }

    /// Indices `h(1), ..., h(t)` of the genealogy of particle `n` at time
    /// `t`, with `h(t) = n` and `h(s) = a_s^{h(s+1)}`.
    pub fn index_history(&self, n: usize) -> Result<Vec<usize>> {
        let store = self.store.as_ref().ok_or(Error::TrajectoriesNotStored)?;
        let mut h = vec![0; self.t];
        h[self.t - 1] = n;
        for s in (0..self.t - 1).rev() {
            h[s] = store.ancestors[s][h[s + 1]];
        }
        Ok(h)
    }

    /// The path `x_{1:t}` ending at particle `n`.
    pub fn trajectory(&self, n: usize) -> Result<Vec<Vec<F>>> {
        let h = self.index_history(n)?;
        let store = self.store.as_ref().ok_or(Error::TrajectoriesNotStored)?;
        Ok(h
            .iter()
            .enumerate()
            .map(|(s, &k)| store.states[s][k * self.dim..(k + 1) * self.dim].to_vec())
            .collect())
    }
}

fn degenerate_error<F: Real>(pf: &PfState<F>) -> Error {
    Error::FilterDegenerate {
        t: pf.t,
        theta: pf.theta.iter().map(|v| v.as_f64()).collect(),
    }
}

/// Fallible form of [`PfState::init`].
pub fn pf_init<F: Real, M: StateSpaceModel<F> + ?Sized>(
    model: &M,
    theta: &[F],
    y: &Observation<F>,
    config: PfConfig,
    rng: &mut RngStream,
) -> Result<PfState<F>> {
    let pf = PfState::init(model, theta, y, config, rng);
    if pf.degenerate {
        return Err(degenerate_error(&pf));
    }
    Ok(pf)
}

/// Fallible form of [`PfState::step`].
pub fn pf_step<F: Real, M: StateSpaceModel<F> + ?Sized>(
    pf: &mut PfState<F>,
    model: &M,
    y: &Observation<F>,
    rng: &mut RngStream,
) -> Result<()> {
    pf.step(model, y, rng);
    if pf.degenerate {
        return Err(degenerate_error(pf));
    }
    Ok(())
}

/// `(log Z_t, filter)` after a full pass over `ys`.
pub fn pf_full_loglik<F: Real, M: StateSpaceModel<F> + ?Sized>(
    model: &M,
    theta: &[F],
    ys: &[Observation<F>],
    config: PfConfig,
    base: &RngStream,
) -> Result<(F, PfState<F>)> {
    if ys.is_empty() {
        return Err(Error::NoData("particle filter needs t >= 1".into()));
    }
    let pf = PfState::run(model, theta, ys, config, base);
    if pf.degenerate {
        return Err(degenerate_error(&pf));
    }
    Ok((pf.log_zhat, pf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Transform;
    use crate::models::{simulate, LgModel};

    /// `g = c` everywhere, Gaussian random-walk states.
    struct ConstLik(f64);

    impl StateSpaceModel<f64> for ConstLik {
        fn name(&self) -> &'static str {
            "const"
        }
        fn theta_names(&self) -> Vec<String> {
            vec![]
        }
        fn state_names(&self) -> Vec<String> {
            vec!["x".into()]
        }
        fn obs_dim(&self) -> usize {
            1
        }
        fn prior_sample(&self, _: &mut RngStream) -> Vec<f64> {
            vec![]
        }
        fn prior_logpdf(&self, _: &[f64]) -> f64 {
            0.0
        }
        fn transforms(&self) -> Vec<Transform> {
            vec![]
        }
        fn init_sample(&self, _: &[f64], rng: &mut RngStream, out: &mut [f64]) {
            out[0] = rng.std_normal();
        }
        fn transition_sample(&self, _: &[f64], prev: &[f64], _: usize, rng: &mut RngStream, out: &mut [f64]) {
            out[0] = prev[0] + rng.std_normal();
        }
        fn obs_logpdf(&self, _: &[f64], x: &[f64], _: &[f64], _: usize) -> f64 {
            if self.0 > 0.0 {
                self.0.ln()
            } else if x[0] > 100.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
        fn obs_sample(&self, _: &[f64], _: &[f64], _: usize, _: &mut RngStream) -> Vec<f64> {
            vec![0.0]
        }
    }

    fn lg_data(t: usize, seed: u64) -> (LgModel, Vec<f64>, Vec<Observation<f64>>) {
        let m = LgModel::fixed(0.8, 1.0, 0.5);
        let theta: Vec<f64> = vec![];
        let (_, ys) = simulate(&m, &theta, t, &mut RngStream::new(seed));
        (m, theta, ys)
    }

    #[test]
    fn single_particle_estimate_is_its_weight() {
        let (m, th, ys) = lg_data(1, 1);
        let mut rng = RngStream::new(4);
        let pf = PfState::init(&m, &th, &ys[0], PfConfig::new(1), &mut rng);
        let w = m.obs_logpdf(&th, pf.particle(0), &ys[0].values, 1);
        assert_eq!(pf.log_zhat, w);
        assert_eq!(pf.norm_weights(), &[1.0]);
    }

    #[test]
    fn constant_likelihood_is_exact() {
        let m = ConstLik(0.3);
        let ys = vec![Observation::scalar(0.0); 7];
        let pf = PfState::run(&m, &[], &ys, PfConfig::new(16), &RngStream::new(1));
        assert!((pf.log_zhat - 7.0 * 0.3f64.ln()).abs() < 1e-12);
        assert_eq!(pf.t, 7);
    }

    #[test]
    fn off_support_everywhere_is_degenerate() {
        let m = ConstLik(0.0);
        let ys = vec![Observation::scalar(0.0); 3];
        let pf = PfState::run(&m, &[], &ys, PfConfig::new(8), &RngStream::new(1));
        assert!(pf.degenerate);
        assert_eq!(pf.log_zhat, f64::NEG_INFINITY);
        assert_eq!(pf.t, 3);
        let err = pf_full_loglik(&m, &[], &ys, PfConfig::new(8), &RngStream::new(1)).unwrap_err();
        assert!(matches!(err, Error::FilterDegenerate { t: 3, .. }));
        assert!(pf_init(&m, &[], &ys[0], PfConfig::new(8), &mut RngStream::new(2)).is_err());
        let stored = PfState::run(&m, &[], &ys, PfConfig::new(8).with_store(true), &RngStream::new(1));
        assert_eq!(stored.trajectory(5).unwrap().len(), 3);
    }

    #[test]
    fn run_matches_init_and_steps() {
        let (m, th, ys) = lg_data(12, 2);
        let base = RngStream::new(77).split(3);
        let cfg = PfConfig::new(32);
        let full = PfState::run(&m, &th, &ys, cfg, &base);
        let mut pf = PfState::init(&m, &th, &ys[0], cfg, &mut base.split(1));
        let mut sum = pf.last_log_increment;
        for t in 2..=ys.len() {
            pf.step(&m, &ys[t - 1], &mut base.split(t as u64));
            sum += pf.last_log_increment;
        }
        assert_eq!(pf, full);
        assert!((sum - pf.log_zhat).abs() < 1e-12);
    }

    #[test]
    fn weights_normalized_after_every_step() {
        let (m, th, ys) = lg_data(20, 3);
        let mut rng = RngStream::new(5);
        let mut pf = PfState::init(&m, &th, &ys[0], PfConfig::new(50), &mut rng);
        for y in &ys[1..] {
            pf.step(&m, y, &mut rng);
            let s: f64 = pf.norm_weights().iter().sum();
            assert!((s - 1.0).abs() < 1e-10);
            assert!(pf.norm_weights().iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn missing_observation_leaves_estimate_unchanged() {
        let (m, th, mut ys) = lg_data(5, 4);
        ys[2] = Observation::missing(1);
        let mut rng = RngStream::new(6);
        let mut pf = PfState::init(&m, &th, &ys[0], PfConfig::new(20), &mut rng);
        pf.step(&m, &ys[1], &mut rng);
        let before = pf.log_zhat;
        pf.step(&m, &ys[2], &mut rng);
        assert_eq!(pf.last_log_increment, 0.0);
        assert_eq!(pf.log_zhat, before);
    }

    #[test]
    fn first_step_is_unbiased() {
        let (m, th, ys) = lg_data(1, 5);
        let exact = m.exact_loglik(&th, &ys).unwrap().unwrap().exp();
        let reps = 10_000;
        let z: Vec<f64> = (0..reps)
            .map(|r| PfState::init(&m, &th, &ys[0], PfConfig::new(4), &mut RngStream::new(r)).log_zhat.exp())
            .collect();
        let mean = z.iter().sum::<f64>() / reps as f64;
        let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * sd / (reps as f64).sqrt());
    }

    #[test]
    fn log_estimate_variance_grows_with_time() {
        let (m, th, ys) = lg_data(40, 6);
        let reps = 500;
        let var_at = |t: usize| {
            let v: Vec<f64> = (0..reps)
                .map(|r| PfState::run(&m, &th, &ys[..t], PfConfig::new(16), &RngStream::with_stream(7, r)).log_zhat)
                .collect();
            let mean = v.iter().sum::<f64>() / reps as f64;
            v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64
        };
        assert!(var_at(40) > var_at(10));
    }

    #[test]
    fn genealogy_terminates_at_time_one() {
        let (m, th, ys) = lg_data(15, 7);
        let cfg = PfConfig::new(10).with_store(true);
        let pf = PfState::run(&m, &th, &ys, cfg, &RngStream::new(9));
        for n in 0..10 {
            let h = pf.index_history(n).unwrap();
            assert_eq!(h.len(), 15);
            assert_eq!(h[14], n);
            assert!(h.iter().all(|&k| k < 10));
            let path = pf.trajectory(n).unwrap();
            assert_eq!(path.last().unwrap().as_slice(), pf.particle(n));
        }
        let plain = PfState::run(&m, &th, &ys, PfConfig::new(10), &RngStream::new(9));
        assert!(matches!(plain.index_history(0), Err(Error::TrajectoriesNotStored)));
        // storage does not change the random path
        assert_eq!(plain.log_zhat, pf.log_zhat);
    }

    #[test]
    fn systematic_scheme_is_also_unbiased_in_practice() {
        let (m, th, ys) = lg_data(10, 8);
        let exact = m.exact_loglik(&th, &ys).unwrap().unwrap();
        let reps = 2000;
        let cfg = PfConfig::new(64).with_scheme(ResampleScheme::Systematic);
        let z: Vec<f64> = (0..reps)
            .map(|r| (PfState::run(&m, &th, &ys, cfg, &RngStream::with_stream(1, r)).log_zhat - exact).exp())
            .collect();
        let mean = z.iter().sum::<f64>() / reps as f64;
        let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sd / (reps as f64).sqrt(), "{mean} {sd}");
    }
}
