//! Seeded excitation and noise generation.
//!
//! Every random quantity in the crate comes from a ChaCha8 generator keyed by
//! `(seed, stream)`. Streams are independent, so per-particle noise stays
//! reproducible regardless of how work is scheduled across threads. Normal
//! variates use the ziggurat sampler from `rand_distr`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Identifies the random-number pipeline; recorded in every run's metadata.
pub const GENERATOR_ID: &str = "chacha8-stream+ziggurat-normal;prbs=lfsr31[x^31+x^28+1]";

/// Stream used for the white measurement noise `v(t)`.
pub const STREAM_MEASUREMENT: u64 = 0;
/// First stream used for process noise; component `i` uses `STREAM_PROCESS + i`.
pub const STREAM_PROCESS: u64 = 1;
/// Stream of the systematic-resampling offsets.
pub const STREAM_RESAMPLE: u64 = 1 << 32;
/// Stream that seeds the PRBS register.
pub const STREAM_INPUT: u64 = (1 << 32) + 1;
/// First per-particle stream; particle `i` uses `STREAM_PARTICLE + i`.
pub const STREAM_PARTICLE: u64 = 1 << 33;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// `len` samples of zero-mean Gaussian noise with the given variance.
pub fn gaussian(seed: u64, stream: u64, len: usize, variance: f64) -> Vec<f64> {
    let sd = variance.max(0.0).sqrt();
    let mut rng = stream_rng(seed, stream);
    (0..len).map(|_| sd * standard_normal(&mut rng)).collect()
}

/// White measurement noise and process noise for one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseStreams {
    /// Measurement noise, variance `R`.
    pub v: Vec<f64>,
    /// Process noise, one `n`-vector per time step, covariance `diag(Q)`.
    pub w: Vec<Vec<f64>>,
    pub seed: u64,
    pub generator_id: String,
}

impl NoiseStreams {
    pub fn generate(seed: u64, len: usize, r: f64, q_diag: &[f64]) -> Self {
        let v = gaussian(seed, STREAM_MEASUREMENT, len, r);
        let columns: Vec<Vec<f64>> = q_diag
            .iter()
            .enumerate()
            .map(|(i, &q)| gaussian(seed, STREAM_PROCESS + i as u64, len, q))
            .collect();
        let w = (0..len).map(|t| columns.iter().map(|c| c[t]).collect()).collect();
        Self {
            v,
            w,
            seed,
            generator_id: GENERATOR_ID.to_string(),
        }
    }

    pub fn zeros(len: usize, n: usize) -> Self {
        Self {
            v: vec![0.0; len],
            w: vec![vec![0.0; n]; len],
            seed: 0,
            generator_id: "zeros".to_string(),
        }
    }
}

const LFSR_MASK: u32 = 0x7fff_ffff;

/// Maximal-length 31-bit Fibonacci LFSR, feedback polynomial x^31 + x^28 + 1.
#[derive(Debug, Clone)]
struct Lfsr31 {
    state: u32,
}

impl Lfsr31 {
    fn from_seed(seed: u64) -> Self {
        let state = stream_rng(seed, STREAM_INPUT).next_u32() & LFSR_MASK;
        Self {
            state: if state == 0 { 1 } else { state },
        }
    }

    fn next_bit(&mut self) -> bool {
        let bit = ((self.state >> 30) ^ (self.state >> 27)) & 1;
        self.state = ((self.state << 1) | bit) & LFSR_MASK;
        bit == 1
    }
}

/// Pseudo-random binary sequence taking values in `{low, high}`.
pub fn prbs(len: usize, seed: u64, low: f64, high: f64) -> Vec<f64> {
    let mut lfsr = Lfsr31::from_seed(seed);
    (0..len).map(|_| if lfsr.next_bit() { high } else { low }).collect()
}

/// A PRBS whose amplitude follows a piecewise-constant schedule.
///
/// The sequence is cut into `amplitudes.len()` segments of `len / m`
/// samples; the last segment absorbs the remainder.
pub fn prbs_amplitude_modulated(len: usize, seed: u64, levels: (f64, f64), amplitudes: &[f64]) -> Result<Vec<f64>> {
    if amplitudes.is_empty() {
        return Err(Error::InvalidArgument("amplitude schedule is empty".into()));
    }
    let m = amplitudes.len();
    let segment = (len / m).max(1);
    let base = prbs(len, seed, levels.0, levels.1);
    Ok(base
        .into_iter()
        .enumerate()
        .map(|(t, s)| s * amplitudes[(t / segment).min(m - 1)])
        .collect())
}

/// Moving-average filter `e(t) = v(t) + sum_i k_i v(t - i)`, with `v(t) = 0`
/// before the first sample.
pub fn ma_filter(v: &[f64], k: &[f64]) -> Vec<f64> {
    (0..v.len())
        .map(|t| {
            k.iter()
                .enumerate()
                .filter(|(i, _)| t > *i)
                .fold(v[t], |acc, (i, ki)| acc + ki * v[t - i - 1])
        })
        .collect()
}
