//! Sequential Bayesian inference for state-space models with SMC²: an SMC
//! sampler over the parameters in which every particle carries a particle
//! filter over the latent states.
//!
//! The numerical core is generic over the scalar type through [`Real`]
//! (implemented for `f32` and `f64`); the aliases below fix it to `f64`.
//!
//! ```no_run
//! use smc2_core::{models::LgModel, simulate, RngStream, Smc2, Smc2Config};
//!
//! let model = LgModel::default();
//! let (_, ys) = simulate(&model, &[0.7], 100, &mut RngStream::new(1));
//! let mut sampler = Smc2::new(&model, Smc2Config::default(), 42).unwrap();
//! sampler.run(&ys).unwrap();
//! println!("log evidence {}", sampler.log_evidence());
//! ```

pub mod dist;
pub mod error;
pub mod ibis;
pub mod kalman;
pub mod linalg;
pub mod models;
pub mod pf;
pub mod pmmh;
pub mod rng;
pub mod scalar;
pub mod smc2;
pub mod weights;

pub use error::{Error, Result};
pub use ibis::{IbisConfig, ProposalKind, Rejuvenation};
pub use models::{simulate, BuiltinModel, Observation, StateSpaceModel};
pub use pf::PfConfig;
pub use pmmh::PmmhConfig;
pub use rng::{ResampleScheme, RngStream};
pub use scalar::Real;
pub use smc2::{Smc2Config, StepDiagnostics};

pub type Smc2<'m, M> = smc2::Smc2Sampler<'m, f64, M>;
pub type Ibis<'m, M> = ibis::Ibis<'m, f64, M>;
pub type PfState = pf::PfState<f64>;
pub type ThetaParticle = smc2::ThetaParticle<f64>;
pub type ProposalFit = ibis::ProposalFit<f64>;
pub type PmmhChain = pmmh::PmmhChain<f64>;
pub type KalmanState = kalman::KalmanState<f64>;
pub type LinearGaussian = kalman::LinearGaussian<f64>;
pub type Matrix = linalg::Matrix<f64>;
pub type WeightedJointSample = smc2::WeightedJointSample<f64>;
pub type Obs = models::Observation<f64>;
