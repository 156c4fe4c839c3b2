use thiserror::Error;

/// Errors raised by the inference engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid observation at t={t}: {reason}")]
    InvalidObservation { t: usize, reason: String },

    #[error("degenerate weights: all weights are zero or not finite")]
    DegenerateWeights,

    /// Every inner particle fell outside the observation support.
    #[error("particle filter degenerate at t={t} (theta = {theta:?})")]
    FilterDegenerate { t: usize, theta: Vec<f64> },

    #[error("every theta-particle has a degenerate filter at t={t}")]
    AllFiltersDegenerate { t: usize },

    #[error("trajectories were not stored; enable trajectory storage")]
    TrajectoriesNotStored,

    #[error("numerical failure in {0}")]
    Numerical(String),

    #[error("no data: {0}")]
    NoData(String),

    #[error("initialisation failed after {attempts} attempts: {reason}")]
    InitFailed { attempts: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
