//! Information vector and noise back-estimation.
//!
//! The identification model is `y(t) = phi(t)' theta + beta(t) + v(t)` with
//!
//! ```text
//! phi(t) = [ -x_1(t-1) .. -x_1(t-n),
//!            x(t-1)' u(t-1) .. x(t-n)' u(t-n),
//!            u(t-1) .. u(t-n),
//!            v(t-1) .. v(t-nk) ]
//! beta(t) = w_1(t-1) + w_2(t-2) + .. + w_n(t-n)
//! ```
//!
//! During identification the states and noises are replaced by their
//! estimates, which live in an [`EstimHistory`].

use nalgebra::DVector;

use crate::model::{parameter_len, SystemMatrices};

/// Fixed-depth buffer indexed by absolute time. Reads of times before the
/// first write (including negative times) return zeros.
#[derive(Debug, Clone)]
struct Lagged {
    width: usize,
    depth: usize,
    data: Vec<f64>,
    latest: Option<usize>,
    zeros: Vec<f64>,
}

impl Lagged {
    fn new(width: usize, depth: usize) -> Self {
        Self {
            width,
            depth,
            data: vec![0.0; width * depth],
            latest: None,
            zeros: vec![0.0; width],
        }
    }

    fn push(&mut self, t: usize, value: &[f64]) {
        assert_eq!(value.len(), self.width, "history sample has the wrong width");
        if let Some(latest) = self.latest {
            assert!(
                t == latest + 1 || t == latest,
                "history writes must be sequential (latest {latest}, got {t})"
            );
        }
        let slot = (t % self.depth) * self.width;
        self.data[slot..slot + self.width].copy_from_slice(value);
        self.latest = Some(t);
    }

    fn get(&self, t: isize) -> &[f64] {
        match self.latest {
            Some(latest) if t >= 0 && (t as usize) <= latest => {
                let t = t as usize;
                assert!(
                    latest - t < self.depth,
                    "history read at {t} is older than the buffer depth"
                );
                let slot = (t % self.depth) * self.width;
                &self.data[slot..slot + self.width]
            }
            _ => &self.zeros,
        }
    }
}

/// Lagged estimates of states, noises, inputs and outputs.
#[derive(Debug, Clone)]
pub struct EstimHistory {
    n: usize,
    n_k: usize,
    x: Lagged,
    v: Lagged,
    w: Lagged,
    e: Lagged,
    u: Lagged,
    y: Lagged,
}

impl EstimHistory {
    pub fn new(n: usize, n_k: usize) -> Self {
        // x(t+1) is written while x(t-n) may still be read.
        let depth = n.max(n_k) + 2;
        Self {
            n,
            n_k,
            x: Lagged::new(n, depth),
            v: Lagged::new(1, depth),
            w: Lagged::new(n, depth),
            e: Lagged::new(1, depth),
            u: Lagged::new(1, depth),
            y: Lagged::new(1, depth),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_k(&self) -> usize {
        self.n_k
    }

    pub fn push_state(&mut self, t: usize, x: &[f64]) {
        self.x.push(t, x);
    }

    pub fn push_input(&mut self, t: usize, u: f64, y: f64) {
        self.u.push(t, &[u]);
        self.y.push(t, &[y]);
    }

    pub fn push_noise(&mut self, t: usize, v: f64, w: &[f64], e: f64) {
        self.v.push(t, &[v]);
        self.w.push(t, w);
        self.e.push(t, &[e]);
    }

    pub fn state(&self, t: isize) -> &[f64] {
        self.x.get(t)
    }

    pub fn v(&self, t: isize) -> f64 {
        self.v.get(t)[0]
    }

    pub fn w(&self, t: isize) -> &[f64] {
        self.w.get(t)
    }

    pub fn e(&self, t: isize) -> f64 {
        self.e.get(t)[0]
    }

    pub fn u(&self, t: isize) -> f64 {
        self.u.get(t)[0]
    }

    pub fn y(&self, t: isize) -> f64 {
        self.y.get(t)[0]
    }

    /// `sum_i k_i v(t - i)`: the part of the colored noise at time `t` that is
    /// already known from past white-noise estimates.
    pub fn ma_term(&self, k: &[f64], t: usize) -> f64 {
        k.iter()
            .enumerate()
            .map(|(i, ki)| ki * self.v(t as isize - i as isize - 1))
            .sum()
    }
}

/// Regressor blocks plus the offset `beta(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InformationVector {
    pub phi_a: Vec<f64>,
    pub phi_xu: Vec<f64>,
    pub phi_u: Vec<f64>,
    pub phi_v: Vec<f64>,
    pub beta: f64,
}

impl InformationVector {
    pub fn len(&self) -> usize {
        self.phi_a.len() + self.phi_xu.len() + self.phi_u.len() + self.phi_v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn blocks(&self) -> impl Iterator<Item = &f64> {
        self.phi_a
            .iter()
            .chain(&self.phi_xu)
            .chain(&self.phi_u)
            .chain(&self.phi_v)
    }

    /// Concatenated regressor `phi(t)`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.blocks().copied().collect()
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.blocks().copied())
    }

    pub fn dot(&self, theta: &[f64]) -> f64 {
        debug_assert_eq!(theta.len(), self.len());
        self.blocks().zip(theta).map(|(p, q)| p * q).sum()
    }
}

/// Builds `phi(t)` and `beta(t)` from lags `t-1, t-2, ...` of the history.
pub fn build_phi(history: &EstimHistory, t: usize) -> InformationVector {
    let n = history.n();
    let t = t as isize;
    let lags = 1..=n as isize;

    let phi_a = lags.clone().map(|i| -history.state(t - i)[0]).collect();
    let phi_xu = lags
        .clone()
        .flat_map(|i| {
            let u = history.u(t - i);
            history.state(t - i).iter().map(move |x| x * u)
        })
        .collect();
    let phi_u = lags.clone().map(|i| history.u(t - i)).collect();
    let phi_v = (1..=history.n_k() as isize).map(|i| history.v(t - i)).collect();
    let beta = lags.map(|i| history.w(t - i)[i as usize - 1]).sum();

    let info = InformationVector {
        phi_a,
        phi_xu,
        phi_u,
        phi_v,
        beta,
    };
    debug_assert_eq!(info.len(), parameter_len(n, history.n_k()));
    info
}

/// Back-estimated noises at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseEstimate {
    pub e: f64,
    pub v: f64,
    pub w: Vec<f64>,
}

/// Recovers `e(t)`, `v(t)` and `w(t)` from the state estimates `x(t)`,
/// `x(t+1)` and the current system matrices, and writes them into the
/// history at time `t`.
pub fn estimate_noises(
    x_t: &[f64],
    x_next: &[f64],
    y_t: f64,
    u_t: f64,
    sys: &SystemMatrices,
    history: &mut EstimHistory,
    t: usize,
) -> NoiseEstimate {
    let e = y_t - x_t[0];
    let v = e - history.ma_term(sys.k.as_slice(), t);
    let predicted = sys.transition(x_t, u_t);
    let w: Vec<f64> = x_next.iter().zip(&predicted).map(|(a, b)| a - b).collect();
    history.push_noise(t, v, &w, e);
    NoiseEstimate { e, v, w }
}
