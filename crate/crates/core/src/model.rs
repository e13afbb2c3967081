//! Bilinear state-space model in observer canonical form.
//!
//! ```text
//! x(t+1) = A x(t) + B x(t) u(t) + f u(t) + w(t)
//! y(t)   = H x(t) + e(t),      H = [1, 0, ..., 0]
//! e(t)   = v(t) + k_1 v(t-1) + ... + k_nk v(t-nk)
//! ```
//!
//! `A` is never stored: it is the companion matrix with first column `-a`
//! and ones on the superdiagonal. `H` is implicit everywhere.
//!
//! The flat parameter vector is packed as `[a | B row-major | f | k]`,
//! which is the order the regressor in [`crate::regressor`] produces.

use nalgebra::{DMatrix, DVector, Schur};

use crate::error::{ensure_finite, Error, Result};
use crate::regressor::{build_phi, EstimHistory};
use crate::signals::{ma_filter, NoiseStreams};

/// Number of entries in the parameter vector for state order `n` and
/// noise order `n_k`.
pub fn parameter_len(n: usize, n_k: usize) -> usize {
    n + n * n + n + n_k
}

/// Companion matrix with first column `-a` and unit superdiagonal.
pub fn companion(a: &[f64]) -> DMatrix<f64> {
    let n = a.len();
    let mut m = DMatrix::zeros(n, n);
    for (i, ai) in a.iter().enumerate() {
        m[(i, 0)] = -ai;
        if i + 1 < n {
            m[(i, i + 1)] = 1.0;
        }
    }
    m
}

/// A single-input single-output bilinear system together with its noise
/// description.
#[derive(Debug, Clone, PartialEq)]
pub struct BilinearModel {
    /// Companion coefficients; `A(i, 0) = -a[i]`.
    pub a: Vec<f64>,
    /// Bilinear coupling, `n x n`.
    pub b: DMatrix<f64>,
    /// Input gain.
    pub f: Vec<f64>,
    /// Moving-average coefficients of the colored measurement noise.
    pub k: Vec<f64>,
    /// Diagonal of the process-noise covariance `Q`.
    pub q_diag: Vec<f64>,
    /// Variance of the white measurement noise `v(t)`.
    pub r: f64,
}

impl BilinearModel {
    pub fn new(a: Vec<f64>, b: DMatrix<f64>, f: Vec<f64>, k: Vec<f64>, q_diag: Vec<f64>, r: f64) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(Error::InvalidArgument("state order must be positive".into()));
        }
        if b.nrows() != n || b.ncols() != n {
            return Err(Error::Dimension {
                what: "B",
                expected: n * n,
                got: b.nrows() * b.ncols(),
            });
        }
        for (what, len) in [("f", f.len()), ("Q diagonal", q_diag.len())] {
            if len != n {
                return Err(Error::Dimension {
                    what,
                    expected: n,
                    got: len,
                });
            }
        }
        ensure_finite(&a, "a")?;
        ensure_finite(b.as_slice(), "B")?;
        ensure_finite(&f, "f")?;
        ensure_finite(&k, "k")?;
        ensure_finite(&q_diag, "Q")?;
        if q_diag.iter().any(|&q| q < 0.0) {
            return Err(Error::InvalidArgument("Q must have non-negative diagonal".into()));
        }
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "R must be finite and non-negative, got {r}"
            )));
        }
        Ok(Self { a, b, f, k, q_diag, r })
    }

    /// Rebuilds a model from a packed parameter vector.
    pub fn from_parameters(theta: &ParameterVector, n: usize, n_k: usize, q_diag: Vec<f64>, r: f64) -> Result<Self> {
        let sys = SystemMatrices::unpack(theta, n, n_k)?;
        let a = (0..n).map(|i| -sys.a[(i, 0)]).collect();
        Self::new(
            a,
            sys.b,
            sys.f.as_slice().to_vec(),
            sys.k.as_slice().to_vec(),
            q_diag,
            r,
        )
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn n_k(&self) -> usize {
        self.k.len()
    }

    pub fn parameter_len(&self) -> usize {
        parameter_len(self.n(), self.n_k())
    }

    /// The transition matrix `A`.
    pub fn a_matrix(&self) -> DMatrix<f64> {
        companion(&self.a)
    }

    pub fn pack(&self) -> ParameterVector {
        pack_parameters(self)
    }

    pub fn matrices(&self) -> SystemMatrices {
        SystemMatrices {
            a: self.a_matrix(),
            b: self.b.clone(),
            f: DVector::from_column_slice(&self.f),
            k: DVector::from_column_slice(&self.k),
        }
    }
}

/// Flat parameter vector `[a_1..a_n, B(1,:), .., B(n,:), f_1..f_n, k_1..k_nk]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

pub fn pack_parameters(model: &BilinearModel) -> ParameterVector {
    let n = model.n();
    let mut theta = Vec::with_capacity(model.parameter_len());
    theta.extend_from_slice(&model.a);
    for i in 0..n {
        theta.extend((0..n).map(|j| model.b[(i, j)]));
    }
    theta.extend_from_slice(&model.f);
    theta.extend_from_slice(&model.k);
    ParameterVector(theta)
}

pub fn unpack_parameters(theta: &ParameterVector, n: usize, n_k: usize) -> Result<SystemMatrices> {
    SystemMatrices::unpack(theta, n, n_k)
}

/// Estimated (or true) system matrices `(A, B, f, k)` rebuilt from a
/// parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub f: DVector<f64>,
    pub k: DVector<f64>,
}

impl SystemMatrices {
    pub fn unpack(theta: &ParameterVector, n: usize, n_k: usize) -> Result<Self> {
        Self::from_slice(theta.as_slice(), n, n_k)
    }

    pub fn from_slice(theta: &[f64], n: usize, n_k: usize) -> Result<Self> {
        let d = parameter_len(n, n_k);
        if theta.len() != d {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: d,
                got: theta.len(),
            });
        }
        let (a, rest) = theta.split_at(n);
        let (b, rest) = rest.split_at(n * n);
        let (f, k) = rest.split_at(n);
        Ok(Self {
            a: companion(a),
            b: DMatrix::from_row_slice(n, n, b),
            f: DVector::from_column_slice(f),
            k: DVector::from_column_slice(k),
        })
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn n_k(&self) -> usize {
        self.k.len()
    }

    /// Writes the noise-free transition `A x + B x u + f u` into `out`.
    pub fn transition_into(&self, x: &[f64], u: f64, out: &mut [f64]) {
        let n = self.n();
        for i in 0..n {
            let mut acc = self.f[i] * u;
            for j in 0..n {
                acc += (self.a[(i, j)] + self.b[(i, j)] * u) * x[j];
            }
            out[i] = acc;
        }
    }

    pub fn transition(&self, x: &[f64], u: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        self.transition_into(x, u, &mut out);
        out
    }

    /// Input-dependent transition `A + B u`.
    pub fn effective_transition(&self, u: f64) -> DMatrix<f64> {
        &self.a + &self.b * u
    }

    /// Largest root modulus of `1 + k_1 z^-1 + ... + k_nk z^-nk`; zero
    /// when `k` is empty.
    pub fn ma_root_radius(&self) -> f64 {
        let m = self.k.len();
        if m == 0 {
            return 0.0;
        }
        let mut c = DMatrix::zeros(m, m);
        for i in 0..m {
            c[(0, i)] = -self.k[i];
            if i + 1 < m {
                c[(i + 1, i)] = 1.0;
            }
        }
        spectral_radius(c)
    }

    /// Spectral radius of `E[M (x) M]` with `M = A + B u`, for an input with
    /// mean `m1` and second moment `m2`. Below one means the state of the
    /// noise-driven system has bounded second moments under i.i.d. inputs.
    pub fn mean_square_radius(&self, m1: f64, m2: f64) -> f64 {
        let (a, b) = (&self.a, &self.b);
        spectral_radius(a.kronecker(a) + (a.kronecker(b) + b.kronecker(a)) * m1 + b.kronecker(b) * m2)
    }
}

/// Largest eigenvalue modulus; `+inf` when the matrix is not finite or the
/// Schur iteration does not converge.
fn spectral_radius(m: DMatrix<f64>) -> f64 {
    if m.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    match Schur::try_new(m, f64::EPSILON, 10_000) {
        Some(schur) => schur.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max),
        None => f64::INFINITY,
    }
}

/// A simulated run, including the noises that produced it.
///
/// `x` holds `L + 1` states starting from the rest state `x(0) = 0`; the
/// other signals hold `L` samples. The noise fields exist so tests can check
/// algebraic identities; estimators only ever see `u` and `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub u: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<Vec<f64>>,
    pub e: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Noise-free part of the output, `x_1(t)`, for `t < L`.
    pub fn clean_output(&self) -> Vec<f64> {
        self.x[..self.len()].iter().map(|x| x[0]).collect()
    }
}

pub fn simulate(model: &BilinearModel, u: &[f64], noise: &NoiseStreams) -> Result<Trajectory> {
    let n = model.n();
    let len = u.len();
    if len == 0 {
        return Err(Error::InvalidArgument("input sequence is empty".into()));
    }
    if noise.v.len() < len {
        return Err(Error::Dimension {
            what: "measurement noise stream",
            expected: len,
            got: noise.v.len(),
        });
    }
    if noise.w.len() < len {
        return Err(Error::Dimension {
            what: "process noise stream",
            expected: len,
            got: noise.w.len(),
        });
    }
    if let Some(bad) = noise.w[..len].iter().find(|w| w.len() != n) {
        return Err(Error::Dimension {
            what: "process noise sample",
            expected: n,
            got: bad.len(),
        });
    }
    ensure_finite(u, "input")?;
    ensure_finite(&noise.v[..len], "measurement noise")?;
    for w in &noise.w[..len] {
        ensure_finite(w, "process noise")?;
    }

    let sys = model.matrices();
    let v = noise.v[..len].to_vec();
    let w = noise.w[..len].to_vec();
    let e = ma_filter(&v, &model.k);

    let mut x = Vec::with_capacity(len + 1);
    x.push(vec![0.0; n]);
    let mut y = Vec::with_capacity(len);
    for t in 0..len {
        let xt = &x[t];
        y.push(xt[0] + e[t]);
        let mut next = sys.transition(xt, u[t]);
        for (xi, wi) in next.iter_mut().zip(&w[t]) {
            *xi += wi;
        }
        ensure_finite(&next, "simulated state")?;
        x.push(next);
    }

    Ok(Trajectory {
        u: u.to_vec(),
        x,
        y,
        v,
        w,
        e,
    })
}

/// Largest absolute residual of `y(t) - phi(t)' theta - beta(t) - v(t)`
/// over the whole trajectory, with the regressor built from the true
/// states and noises.
///
/// Because the system starts at rest the identity is exact from `t = 0`.
pub fn regression_identity_check(model: &BilinearModel, traj: &Trajectory) -> f64 {
    let theta = model.pack();
    let mut history = EstimHistory::new(model.n(), model.n_k());
    history.push_state(0, &traj.x[0]);
    let mut worst: f64 = 0.0;
    for t in 0..traj.len() {
        let info = build_phi(&history, t);
        let fit: f64 = info.dot(theta.as_slice()) + info.beta;
        worst = worst.max((traj.y[t] - fit - traj.v[t]).abs());
        history.push_input(t, traj.u[t], traj.y[t]);
        history.push_state(t + 1, &traj.x[t + 1]);
        history.push_noise(t, traj.v[t], &traj.w[t], traj.e[t]);
    }
    worst
}
