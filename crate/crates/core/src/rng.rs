//! Splittable random streams and resampling primitives.
//!
//! A [`RngStream`] is a ChaCha8 generator keyed by `(seed, stream_id)`.
//! Child streams are derived by hashing the parent's stream id with a tag, so
//! any consumer can be given a stream that depends only on its logical
//! position (particle index, time, purpose), never on execution order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1, Gamma, Open01, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive combination of a parent stream id and a child tag.
#[inline]
fn derive_stream_id(parent: u64, tag: u64) -> u64 {
    splitmix64(parent.wrapping_mul(0xD6E8_FEB8_6659_FD93) ^ splitmix64(tag ^ 0xA076_1D64_78BD_642F))
}

/// Deterministic random stream identified by `(seed, stream_id)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Child stream determined by `(seed, stream_id, tag)` only. The
    /// parent's consumption state has no influence on the child.
    pub fn split(&self, tag: u64) -> RngStream {
        RngStream::with_stream(self.seed, derive_stream_id(self.stream_id, tag))
    }

    /// Repeated [`split`](Self::split) along a path of tags.
    pub fn split_path(&self, tags: &[u64]) -> RngStream {
        tags.iter().fold(self.clone(), |s, &tag| s.split(tag))
    }

    /// Uniform draw on the open interval (0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        Open01.sample(&mut self.inner)
    }

    #[inline]
    pub fn std_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    #[inline]
    pub fn exp1(&mut self) -> f64 {
        Exp1.sample(&mut self.inner)
    }

    #[inline]
    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.std_normal()
    }

    /// Uniform index in `0..n`.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn sample(&mut self, dist: StdDist) -> Result<f64> {
        sample_standard(dist, self)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Standard laws used by the built-in models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StdDist {
    Uniform01,
    StdNormal,
    Exponential { rate: f64 },
    /// Shape/rate parametrisation (mean `shape / rate`).
    Gamma { shape: f64, rate: f64 },
    Poisson { mean: f64 },
}

pub fn sample_standard(dist: StdDist, rng: &mut RngStream) -> Result<f64> {
    match dist {
        StdDist::Uniform01 => Ok(rng.uniform()),
        StdDist::StdNormal => Ok(rng.std_normal()),
        StdDist::Exponential { rate } => {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(Error::InvalidParameter(format!("exponential rate {rate}")));
            }
            let d = Exp::new(rate).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Ok(d.sample(rng))
        }
        StdDist::Gamma { shape, rate } => {
            if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "gamma shape {shape} rate {rate}"
                )));
            }
            let d = Gamma::new(shape, 1.0 / rate)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Ok(d.sample(rng))
        }
        StdDist::Poisson { mean } => {
            if !(mean >= 0.0 && mean.is_finite()) {
                return Err(Error::InvalidParameter(format!("poisson mean {mean}")));
            }
            if mean == 0.0 {
                return Ok(0.0);
            }
            let d = Poisson::new(mean).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            Ok(d.sample(rng))
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleScheme {
    #[default]
    Multinomial,
    Systematic,
}

/// Draws `count` ancestor indices (0-based) according to `weights`.
///
/// Weights need not be exactly normalised; they are divided by their sum.
/// Multinomial indices are returned in sorted order (the multiset is what is
/// distributed multinomially); systematic indices are sorted by construction.
pub fn resample_indices<F: Real>(
    weights: &[F],
    count: usize,
    scheme: ResampleScheme,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    let mut total = 0.0f64;
    for &w in weights {
        let w = w.as_f64();
        if w.is_nan() || w < 0.0 {
            return Err(Error::DegenerateWeights);
        }
        total += w;
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateWeights);
    }
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return Ok(out);
    }
    let n = weights.len();
    match scheme {
        ResampleScheme::Multinomial => {
            // Sorted uniforms from normalised exponential spacings.
            let mut spacings: Vec<f64> = (0..=count).map(|_| rng.exp1()).collect();
            let sum: f64 = spacings.iter().sum();
            let mut acc = 0.0;
            for s in spacings.iter_mut().take(count) {
                acc += *s;
                *s = acc / sum;
            }
            let mut j = 0usize;
            let mut cum = weights[0].as_f64() / total;
            for &u in spacings.iter().take(count) {
                while u > cum && j + 1 < n {
                    j += 1;
                    cum += weights[j].as_f64() / total;
                }
                out.push(j);
            }
        }
        ResampleScheme::Systematic => {
            let step = 1.0 / count as f64;
            let start = rng.uniform() * step;
            let mut j = 0usize;
            let mut cum = weights[0].as_f64() / total;
            for i in 0..count {
                let u = start + i as f64 * step;
                while u > cum && j + 1 < n {
                    j += 1;
                    cum += weights[j].as_f64() / total;
                }
                out.push(j);
            }
        }
    }
    // Zero-weight indices can only be reached through rounding at the end of
    // the cumulative sum; move such picks to the last positive weight.
    if let Some(last_pos) = weights.iter().rposition(|w| w.as_f64() > 0.0) {
        for idx in out.iter_mut() {
            if weights[*idx].as_f64() == 0.0 {
                *idx = if *idx > last_pos {
                    last_pos
                } else {
                    (*idx..n).find(|&k| weights[k].as_f64() > 0.0).unwrap_or(last_pos)
                };
            }
        }
    }
    Ok(out)
}

/// Purpose tags for the first level of stream splitting in the samplers.
pub mod tags {
    pub const PRIOR: u64 = 1;
    pub const PROPAGATE: u64 = 2;
    pub const REJUVENATE: u64 = 3;
    pub const EXCHANGE: u64 = 4;
    pub const RESAMPLE: u64 = 5;
    pub const SELECT: u64 = 6;
    pub const INIT: u64 = 7;
}
