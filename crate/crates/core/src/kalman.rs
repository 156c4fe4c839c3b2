//! Exact filtering, smoothing and marginal likelihood for linear-Gaussian
//! state-space models:
//!
//! ```text
//! x_1 ~ N(m0, P0),  x_{t+1} = F x_t + N(0, Q),  y_t = H x_t + N(0, R)
//! ```
//!
//! These recursions are the reference against which every Monte Carlo
//! estimator in the crate is checked.

use crate::error::{Error, Result};
use crate::linalg::{mvn_logpdf_chol, Matrix};
use crate::scalar::Real;

/// System matrices of a linear-Gaussian state-space model.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGaussian<F> {
    pub f: Matrix<F>,
    pub q: Matrix<F>,
    pub h: Matrix<F>,
    pub r: Matrix<F>,
    pub m0: Vec<F>,
    pub p0: Matrix<F>,
}

impl<F: Real> LinearGaussian<F> {
    pub fn state_dim(&self) -> usize {
        self.m0.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.h.rows()
    }
}

/// Filtering distribution `p(x_t | y_{1:t})` plus the running log-likelihood.
/// At `t = 0` the moments are those of the initial law of `x_1`.
#[derive(Clone, Debug, PartialEq)]
pub struct KalmanState<F> {
    pub mean: Vec<F>,
    pub cov: Matrix<F>,
    pub loglik: F,
    pub last_increment: F,
    pub t: usize,
}

impl<F: Real> KalmanState<F> {
    pub fn prior(sys: &LinearGaussian<F>) -> Self {
        Self {
            mean: sys.m0.clone(),
            cov: sys.p0.clone(),
            loglik: F::zero(),
            last_increment: F::zero(),
            t: 0,
        }
    }
}

/// Predicted moments of `x_{t+1}` given a filtered state at `t`; the
/// initial law when `t = 0`.
pub fn predict<F: Real>(state: &KalmanState<F>, sys: &LinearGaussian<F>) -> (Vec<F>, Matrix<F>) {
    if state.t == 0 {
        return (state.mean.clone(), state.cov.clone());
    }
    let mean = sys.f.matvec(&state.mean);
    let cov = sys
        .f
        .matmul(&state.cov)
        .matmul(&sys.f.transpose())
        .add(&sys.q)
        .symmetrize();
    (mean, cov)
}

/// One predict/update cycle. `None` marks a missing observation: the state
/// is propagated and the log-likelihood is unchanged.
pub fn kalman_step<F: Real>(
    state: &KalmanState<F>,
    y: Option<&[F]>,
    sys: &LinearGaussian<F>,
) -> Result<KalmanState<F>> {
    let (pm, pc) = predict(state, sys);
    let t = state.t + 1;
    let Some(y) = y else {
        return Ok(KalmanState {
            mean: pm,
            cov: pc,
            loglik: state.loglik,
            last_increment: F::zero(),
            t,
        });
    };
    let ht = sys.h.transpose();
    let y_mean = sys.h.matvec(&pm);
    let s = sys.h.matmul(&pc).matmul(&ht).add(&sys.r).symmetrize();
    let s_chol = s
        .cholesky()
        .map_err(|e| Error::Numerical(format!("innovation covariance at t={t}: {e}")))?;
    let inc = mvn_logpdf_chol(y, &y_mean, &s_chol);
    // Gain K = P H^T S^{-1}, solved column by column through the factor.
    let pht = pc.matmul(&ht);
    let n = pm.len();
    let p = y.len();
    let mut gain = Matrix::zeros(n, p);
    for i in 0..n {
        let row: Vec<F> = (0..p).map(|j| pht[(i, j)]).collect();
        let z = s_chol.solve_lower(&row);
        let k = s_chol.solve_lower_transpose(&z);
        for j in 0..p {
            gain[(i, j)] = k[j];
        }
    }
    let resid: Vec<F> = y.iter().zip(&y_mean).map(|(&a, &b)| a - b).collect();
    let corr = gain.matvec(&resid);
    let mean: Vec<F> = pm.iter().zip(&corr).map(|(&a, &b)| a + b).collect();
    // Joseph form: (I - K H) P (I - K H)^T + K R K^T.
    let ikh = Matrix::identity(n).sub(&gain.matmul(&sys.h));
    let cov = ikh
        .matmul(&pc)
        .matmul(&ikh.transpose())
        .add(&gain.matmul(&sys.r).matmul(&gain.transpose()))
        .symmetrize();
    Ok(KalmanState {
        mean,
        cov,
        loglik: state.loglik + inc,
        last_increment: inc,
        t,
    })
}

/// Runs the filter over a whole series; returns the filtered state at every
/// time (index `t - 1`).
pub fn kalman_filter<F: Real>(
    sys: &LinearGaussian<F>,
    ys: &[Option<&[F]>],
) -> Result<Vec<KalmanState<F>>> {
    let mut out = Vec::with_capacity(ys.len());
    let mut state = KalmanState::prior(sys);
    for y in ys {
        state = kalman_step(&state, *y, sys)?;
        out.push(state.clone());
    }
    Ok(out)
}

pub fn kalman_loglik<F: Real>(sys: &LinearGaussian<F>, ys: &[Option<&[F]>]) -> Result<F> {
    let mut state = KalmanState::prior(sys);
    for y in ys {
        state = kalman_step(&state, *y, sys)?;
    }
    Ok(state.loglik)
}

/// Smoothed moments of `p(x_t | y_{1:T})` from a completed forward pass.
pub fn rts_smoother<F: Real>(
    filtered: &[KalmanState<F>],
    sys: &LinearGaussian<F>,
) -> Result<Vec<(Vec<F>, Matrix<F>)>> {
    let Some(last) = filtered.last() else {
        return Ok(Vec::new());
    };
    let mut out = vec![(last.mean.clone(), last.cov.clone()); filtered.len()];
    let ft = sys.f.transpose();
    for t in (0..filtered.len() - 1).rev() {
        let fs = &filtered[t];
        let (pm, pc) = predict(fs, sys);
        let pc_inv = pc
            .spd_inverse()
            .map_err(|e| Error::Numerical(format!("smoother at t={}: {e}", t + 1)))?;
        let gain = fs.cov.matmul(&ft).matmul(&pc_inv);
        let (next_mean, next_cov) = &out[t + 1];
        let dm: Vec<F> = next_mean.iter().zip(&pm).map(|(&a, &b)| a - b).collect();
        let corr = gain.matvec(&dm);
        let mean: Vec<F> = fs.mean.iter().zip(&corr).map(|(&a, &b)| a + b).collect();
        let cov = fs
            .cov
            .add(&gain.matmul(&next_cov.sub(&pc)).matmul(&gain.transpose()))
            .symmetrize();
        out[t] = (mean, cov);
    }
    Ok(out)
}
