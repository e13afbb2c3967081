//! Bootstrap particle filter for the bilinear model.
//!
//! Two weighting rules are provided. [`ParticleSet::gaussian_weights`] uses
//! the Gaussian likelihood of the output error and needs the measurement
//! noise variance `R`. [`ParticleSet::dwo_weights`] uses the closed-form
//! direct weight optimisation
//!
//! ```text
//! gamma_j = |y - g(x_j)|,   gamma = max_j gamma_j + 1
//! psi_j   = (gamma - gamma_j) / (N gamma - sum_j gamma_j)
//! ```
//!
//! which maximises `(gamma - sum_j psi_j gamma_j) / ||psi||` over
//! `sum_j psi_j = 1` and needs no noise variance at all.
//!
//! Each particle owns its own random stream, derived from the filter seed
//! and the particle index, so propagation gives bit-identical results for
//! any number of worker threads.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemMatrices;
use crate::signals::{standard_normal, stream_rng, STREAM_PARTICLE, STREAM_RESAMPLE};

/// Particles per rayon task during propagation.
const PAR_CHUNK: usize = 256;

/// How the state estimate is extracted from the particle set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateEstimateMode {
    /// `sum_i w_i x_i`.
    #[default]
    Weighted,
    /// Plain mean of the particles, ignoring weights.
    ResampledMean,
}

#[derive(Debug, Clone)]
pub struct ParticleSet {
    n: usize,
    states: Vec<f64>,
    weights: Vec<f64>,
    rngs: Vec<ChaCha8Rng>,
    resample_rng: ChaCha8Rng,
}

impl ParticleSet {
    /// `count` particles drawn from `N(0, spread^2 I)` with uniform weights.
    pub fn init(count: usize, n: usize, spread: f64, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidArgument("particle count must be positive".into()));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("state dimension must be positive".into()));
        }
        if !(spread >= 0.0 && spread.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "initial spread must be non-negative, got {spread}"
            )));
        }
        let mut rngs: Vec<ChaCha8Rng> = (0..count)
            .map(|i| stream_rng(seed, STREAM_PARTICLE + i as u64))
            .collect();
        let mut states = vec![0.0; count * n];
        for (x, rng) in states.chunks_mut(n).zip(rngs.iter_mut()) {
            for xi in x {
                *xi = spread * standard_normal(rng);
            }
        }
        Ok(Self {
            n,
            states,
            weights: vec![1.0 / count as f64; count],
            rngs,
            resample_rng: stream_rng(seed, STREAM_RESAMPLE),
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.states[i * self.n..(i + 1) * self.n]
    }

    pub fn particles(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks(self.n)
    }

    /// Overwrites states and weights; weights are normalised.
    pub fn set_particles(&mut self, states: &[Vec<f64>], weights: &[f64]) -> Result<()> {
        if states.len() != self.len() || weights.len() != self.len() {
            return Err(Error::Dimension {
                what: "particle set",
                expected: self.len(),
                got: states.len().min(weights.len()),
            });
        }
        for (dst, src) in self.states.chunks_mut(self.n).zip(states) {
            if src.len() != self.n {
                return Err(Error::Dimension {
                    what: "particle state",
                    expected: self.n,
                    got: src.len(),
                });
            }
            dst.copy_from_slice(src);
        }
        self.weights.copy_from_slice(weights);
        normalize(&mut self.weights)
    }

    /// `x_i <- A x_i + B x_i u + f u + w_i`, `w_i ~ N(0, diag(q_diag))` drawn
    /// from particle `i`'s own stream. Weights are left untouched.
    pub fn propagate(&mut self, sys: &SystemMatrices, u: f64, q_diag: &[f64]) {
        let n = self.n;
        debug_assert_eq!(sys.n(), n);
        debug_assert_eq!(q_diag.len(), n);
        let sd: Vec<f64> = q_diag.iter().map(|q| q.max(0.0).sqrt()).collect();
        self.states
            .par_chunks_mut(n * PAR_CHUNK)
            .zip(self.rngs.par_chunks_mut(PAR_CHUNK))
            .for_each(|(block, rngs)| {
                let mut next = vec![0.0; n];
                for (x, rng) in block.chunks_mut(n).zip(rngs.iter_mut()) {
                    sys.transition_into(x, u, &mut next);
                    for ((xi, nx), s) in x.iter_mut().zip(&next).zip(&sd) {
                        // always draw, so the stream position does not depend on Q
                        let z = standard_normal(rng);
                        *xi = nx + s * z;
                    }
                }
            });
    }

    /// Output errors `y - x_1^(i) - ma_term`, where `ma_term` is the known
    /// colored-noise contribution `sum_j k_j v(t-j)`.
    pub fn output_errors(&self, y: f64, ma_term: f64) -> Vec<f64> {
        self.particles().map(|x| y - x[0] - ma_term).collect()
    }

    /// Multiplies the Gaussian likelihood `exp(-err^2 / 2R)` into the weights
    /// and normalises.
    pub fn gaussian_weights(&mut self, y: f64, ma_term: f64, r: f64) -> Result<()> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "measurement noise variance must be positive, got {r}"
            )));
        }
        let errors = self.output_errors(y, ma_term);
        let log_w: Vec<f64> = errors
            .iter()
            .zip(&self.weights)
            .map(|(e, w)| w.ln() - e * e / (2.0 * r))
            .collect();
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::NonFinite("particle log-weights"));
        }
        for (w, lw) in self.weights.iter_mut().zip(&log_w) {
            *w = (lw - max).exp();
        }
        normalize(&mut self.weights)
    }

    /// Multiplies the variance-free weights `psi` into the weights and
    /// normalises.
    pub fn dwo_weights(&mut self, y: f64, ma_term: f64) -> Result<()> {
        let gammas: Vec<f64> = self.output_errors(y, ma_term).iter().map(|e| e.abs()).collect();
        let psi = dwo_psi(&gammas)?;
        for (w, p) in self.weights.iter_mut().zip(&psi) {
            *w *= p;
        }
        normalize(&mut self.weights)
    }

    pub fn ess(&self) -> f64 {
        ess(&self.weights)
    }

    /// Systematic resampling if the effective sample size is below
    /// `threshold`. Returns whether resampling happened.
    pub fn resample(&mut self, threshold: f64) -> bool {
        if self.ess() < threshold {
            self.resample_systematic();
            true
        } else {
            false
        }
    }

    /// Unconditional systematic resampling: one uniform offset, `N` evenly
    /// spaced points on the cumulative weights. Weights are reset to `1/N`.
    pub fn resample_systematic(&mut self) {
        let count = self.len();
        let offset: f64 = self.resample_rng.random();
        let indices = systematic_indices(&self.weights, offset);
        let n = self.n;
        let mut states = vec![0.0; count * n];
        for (dst, &src) in states.chunks_mut(n).zip(&indices) {
            dst.copy_from_slice(&self.states[src * n..(src + 1) * n]);
        }
        self.states = states;
        self.weights.fill(1.0 / count as f64);
    }

    pub fn estimate_state(&self, mode: StateEstimateMode) -> Vec<f64> {
        let mut est = vec![0.0; self.n];
        match mode {
            StateEstimateMode::Weighted => {
                for (x, w) in self.particles().zip(&self.weights) {
                    for (e, xi) in est.iter_mut().zip(x) {
                        *e += w * xi;
                    }
                }
            }
            StateEstimateMode::ResampledMean => {
                let scale = 1.0 / self.len() as f64;
                for x in self.particles() {
                    for (e, xi) in est.iter_mut().zip(x) {
                        *e += xi * scale;
                    }
                }
            }
        }
        est
    }
}

/// Closed-form variance-free weights for absolute output errors `gammas`.
pub fn dwo_psi(gammas: &[f64]) -> Result<Vec<f64>> {
    if gammas.is_empty() {
        return Err(Error::InvalidArgument("no particles to weight".into()));
    }
    if gammas.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("particle output errors"));
    }
    let gamma = gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let denom = gammas.len() as f64 * gamma - gammas.iter().sum::<f64>();
    Ok(gammas.iter().map(|g| (gamma - g) / denom).collect())
}

/// The objective maximised by [`dwo_psi`]:
/// `(gamma - sum_j psi_j gamma_j) / ||psi||`.
pub fn dwo_objective(psi: &[f64], gammas: &[f64]) -> f64 {
    let gamma = gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    let mean: f64 = psi.iter().zip(gammas).map(|(p, g)| p * g).sum();
    let norm = psi.iter().map(|p| p * p).sum::<f64>().sqrt();
    (gamma - mean) / norm
}

/// Effective sample size `1 / sum w_i^2`.
pub fn ess(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Indices selected by systematic resampling with offset `u0` in `[0, 1)`.
pub fn systematic_indices(weights: &[f64], u0: f64) -> Vec<usize> {
    let count = weights.len();
    let step = 1.0 / count as f64;
    let mut indices = Vec::with_capacity(count);
    let mut cumulative = weights[0];
    let mut i = 0;
    for j in 0..count {
        let point = (u0 + j as f64) * step;
        while point >= cumulative && i + 1 < count {
            i += 1;
            cumulative += weights[i];
        }
        indices.push(i);
    }
    indices
}

fn normalize(weights: &mut [f64]) -> Result<()> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::NonFinite("particle weight sum"));
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(())
}
