//! Joint state and parameter estimation loops.
//!
//! Each time step `t` runs, in order:
//!
//! 1. build `phi(t)`, `beta(t)` from lags `t-1, t-2, ...` of the estimates;
//! 2. update `theta` by recursive least squares with `y(t)`;
//! 3. unpack `theta` into `(A, B, f, k)`;
//! 4. advance the state estimator with `y(t)` and `u(t)`, producing
//!    `x(t+1)`;
//! 5. back-estimate `e(t)`, `v(t)` and `w(t)` and push them into the history.
//!
//! For B-PF-RLS the state estimator is the particle filter: the particles
//! (the predictive cloud for `x(t)`) are weighted against `y(t)`, resampled,
//! propagated with `u(t)`, and `x(t+1)` is read off the propagated cloud.
//! For BSO-RLS it is one [`bso_step`].
//!
//! Two safeguards are on by default. The least-squares update uses a
//! forgetting factor that starts below one and tends to one, so the start-up
//! transient does not bias the final estimate. The model handed to the state
//! estimator and to the noise back-estimation is kept mean-square stable
//! with a minimum-phase noise polynomial. The reported estimates are always
//! the raw least-squares ones.

use serde::{Deserialize, Serialize};

use crate::bso::{bso_step, ObserverState};
use crate::error::{ensure_finite, Error, Result};
use crate::metrics::delta_theta;
use crate::model::{parameter_len, SystemMatrices};
use crate::pf::ParticleSet;
pub use crate::pf::StateEstimateMode;
use crate::regressor::{build_phi, estimate_noises, EstimHistory};
use crate::rls::{RlsState, DEFAULT_P0};
use crate::signals::GENERATOR_ID;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// Gaussian likelihood with the configured measurement-noise variance.
    KnownR,
    /// Variance-free direct weight optimisation.
    Dwo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResamplePolicy {
    EveryStep,
    /// Resample when the effective sample size drops below this fraction
    /// of the particle count.
    EssThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Bpfrls,
    Bsorls,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Bpfrls => "bpfrls",
            Estimator::Bsorls => "bsorls",
        }
    }
}

/// Forgetting factor that starts at `initial` and approaches one:
/// `lambda(0) = initial`, `lambda(t) = rate * lambda(t-1) + 1 - rate`.
///
/// Early regressors are built from poor state estimates; discounting them
/// keeps the start-up transient from biasing the final estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Forgetting {
    pub initial: f64,
    pub rate: f64,
}

impl Default for Forgetting {
    fn default() -> Self {
        Self {
            initial: 0.99,
            rate: 0.999,
        }
    }
}

impl Forgetting {
    /// `lambda(t)`, in closed form.
    pub fn factor(&self, t: usize) -> f64 {
        1.0 - (1.0 - self.initial) * self.rate.powi(t.min(i32::MAX as usize) as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointConfig {
    pub n: usize,
    pub n_k: usize,
    pub particles: usize,
    pub weight_mode: WeightMode,
    /// Measurement-noise variance; required for [`WeightMode::KnownR`].
    pub r: Option<f64>,
    /// Diagonal of the process-noise covariance used to propagate particles.
    pub q_diag: Vec<f64>,
    pub p0: f64,
    /// Initial parameter estimate; `None` means `1e-6` everywhere.
    pub theta0: Option<Vec<f64>>,
    /// Standard deviation of the initial particle cloud around the origin.
    pub init_spread: f64,
    pub resample: ResamplePolicy,
    pub state_estimate: StateEstimateMode,
    pub estimator: Estimator,
    /// Initial observer covariance scale for BSO-RLS.
    pub observer_p0: f64,
    /// Restrict the model used for state and noise estimation to the stable
    /// region; the reported parameter estimates are never altered.
    pub stability_guard: bool,
    /// `None` runs plain recursive least squares.
    pub forgetting: Option<Forgetting>,
    pub seed: u64,
}

impl JointConfig {
    /// Defaults for a system of order `n` with `n_k` noise coefficients.
    pub fn new(n: usize, n_k: usize, q_diag: Vec<f64>, r: Option<f64>) -> Self {
        Self {
            n,
            n_k,
            particles: 1002,
            weight_mode: WeightMode::KnownR,
            r,
            q_diag,
            p0: DEFAULT_P0,
            theta0: None,
            init_spread: 0.1,
            resample: ResamplePolicy::EveryStep,
            state_estimate: StateEstimateMode::Weighted,
            estimator: Estimator::Bpfrls,
            observer_p0: 1.0,
            stability_guard: true,
            forgetting: Some(Forgetting::default()),
            seed: 0,
        }
    }

    pub fn parameter_len(&self) -> usize {
        parameter_len(self.n, self.n_k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("state order must be positive".into()));
        }
        if self.q_diag.len() != self.n {
            return Err(Error::Dimension {
                what: "Q diagonal",
                expected: self.n,
                got: self.q_diag.len(),
            });
        }
        ensure_finite(&self.q_diag, "Q diagonal")?;
        if self.q_diag.iter().any(|&q| q < 0.0) {
            return Err(Error::InvalidArgument("Q must have non-negative diagonal".into()));
        }
        if let Some(theta0) = &self.theta0 {
            if theta0.len() != self.parameter_len() {
                return Err(Error::Dimension {
                    what: "initial parameter vector",
                    expected: self.parameter_len(),
                    got: theta0.len(),
                });
            }
        }
        if self.estimator == Estimator::Bpfrls {
            if self.particles == 0 {
                return Err(Error::InvalidArgument("particle count must be positive".into()));
            }
            if self.weight_mode == WeightMode::KnownR {
                match self.r {
                    Some(r) if r > 0.0 && r.is_finite() => {}
                    Some(r) => {
                        return Err(Error::InvalidArgument(format!(
                            "known-r weighting needs a positive R, got {r}"
                        )))
                    }
                    None => {
                        return Err(Error::InvalidArgument(
                            "known-r weighting needs the measurement-noise variance R".into(),
                        ))
                    }
                }
            }
            if let ResamplePolicy::EssThreshold(f) = self.resample {
                if !(0.0..=1.0).contains(&f) {
                    return Err(Error::InvalidArgument(format!(
                        "ESS threshold fraction must lie in [0, 1], got {f}"
                    )));
                }
            }
        }
        if let Some(fg) = self.forgetting {
            if !(fg.initial > 0.0 && fg.initial <= 1.0 && (0.0..=1.0).contains(&fg.rate)) {
                return Err(Error::InvalidArgument(format!(
                    "forgetting needs initial in (0, 1] and rate in [0, 1], got {} and {}",
                    fg.initial, fg.rate
                )));
            }
        }
        if !(self.observer_p0 >= 0.0 && self.observer_p0.is_finite()) {
            return Err(Error::InvalidArgument("observer_p0 must be non-negative".into()));
        }
        Ok(())
    }
}

/// Time-indexed output of an identification run. Row `t` of every history
/// refers to time step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationResult {
    /// `theta(t)` after the update with `y(t)`.
    pub theta: Vec<Vec<f64>>,
    /// `x(t)`: the state estimate available when `y(t)` arrives.
    pub x_hat: Vec<Vec<f64>>,
    pub v_hat: Vec<f64>,
    pub w_hat: Vec<Vec<f64>>,
    pub e_hat: Vec<f64>,
    /// `||theta(t) - theta|| / ||theta||`, present when the truth is known.
    pub delta_theta: Option<Vec<f64>>,
    /// `x(L)`, the state estimate one step past the data.
    pub final_state: Vec<f64>,
    pub config: JointConfig,
    pub generator_id: String,
}

impl IdentificationResult {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn final_theta(&self) -> &[f64] {
        self.theta.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_delta(&self) -> Option<f64> {
        self.delta_theta.as_ref().and_then(|d| d.last().copied())
    }
}

trait StateTracker {
    fn estimate(&self) -> Vec<f64>;
    /// Consumes `y(t)`, `u(t)` and returns `x(t+1)`.
    fn advance(&mut self, sys: &SystemMatrices, u: f64, y: f64, ma_term: f64) -> Result<Vec<f64>>;
}

struct ParticleTracker {
    set: ParticleSet,
    weight_mode: WeightMode,
    r: f64,
    q_diag: Vec<f64>,
    resample: ResamplePolicy,
    mode: StateEstimateMode,
}

impl StateTracker for ParticleTracker {
    fn estimate(&self) -> Vec<f64> {
        self.set.estimate_state(self.mode)
    }

    fn advance(&mut self, sys: &SystemMatrices, u: f64, y: f64, ma_term: f64) -> Result<Vec<f64>> {
        match self.weight_mode {
            WeightMode::KnownR => self.set.gaussian_weights(y, ma_term, self.r)?,
            WeightMode::Dwo => self.set.dwo_weights(y, ma_term)?,
        }
        match self.resample {
            ResamplePolicy::EveryStep => self.set.resample_systematic(),
            ResamplePolicy::EssThreshold(f) => {
                self.set.resample(f * self.set.len() as f64);
            }
        }
        self.set.propagate(sys, u, &self.q_diag);
        Ok(self.estimate())
    }
}

struct ObserverTracker {
    state: ObserverState,
}

impl StateTracker for ObserverTracker {
    fn estimate(&self) -> Vec<f64> {
        self.state.x.as_slice().to_vec()
    }

    fn advance(&mut self, sys: &SystemMatrices, u: f64, y: f64, ma_term: f64) -> Result<Vec<f64>> {
        let (next, _) = bso_step(&self.state, sys, u, y, ma_term);
        self.state = next;
        Ok(self.estimate())
    }
}

/// Keeps the model handed to the state tracker and the noise back-estimation
/// inside the stable region. The dynamics must be mean-square stable for the
/// empirical moments of the inputs seen so far, and the MA polynomial must
/// have all roots inside the unit circle. An estimate that fails is replaced by
/// the furthest passing point on the segment from the model used last.
struct StabilityGuard {
    current: SystemMatrices,
    steps: f64,
    u_sum: f64,
    u_sq_sum: f64,
}

impl StabilityGuard {
    fn new(initial: SystemMatrices) -> Self {
        Self {
            current: initial,
            steps: 0.0,
            u_sum: 0.0,
            u_sq_sum: 0.0,
        }
    }

    fn admit(&mut self, proposed: &SystemMatrices, u: f64) -> &SystemMatrices {
        self.steps += 1.0;
        self.u_sum += u;
        self.u_sq_sum += u * u;
        let (m1, m2) = (self.u_sum / self.steps, self.u_sq_sum / self.steps);
        let prev = &self.current;

        let dynamics = |lam: f64| {
            let mut m = prev.clone();
            m.a = lerp(&prev.a, &proposed.a, lam);
            m.b = lerp(&prev.b, &proposed.b, lam);
            m.f = lerp(&prev.f, &proposed.f, lam);
            m
        };
        let lam = furthest_admissible(|l| dynamics(l).mean_square_radius(m1, m2) < 1.0);
        let mut next = dynamics(lam);

        let noise = |lam: f64| {
            let mut m = prev.clone();
            m.k = lerp(&prev.k, &proposed.k, lam);
            m
        };
        let lam_k = furthest_admissible(|l| noise(l).ma_root_radius() < 1.0);
        next.k = noise(lam_k).k;

        self.current = next;
        &self.current
    }
}

fn lerp<R: nalgebra::Dim, C: nalgebra::Dim>(
    from: &nalgebra::OMatrix<f64, R, C>,
    to: &nalgebra::OMatrix<f64, R, C>,
    lam: f64,
) -> nalgebra::OMatrix<f64, R, C>
where
    nalgebra::DefaultAllocator: nalgebra::allocator::Allocator<R, C>,
{
    from + (to - from) * lam
}

/// Largest `lam` in `[0, 1]` (to bisection resolution) with `ok(lam)`,
/// given `ok(0)`.
fn furthest_admissible(ok: impl Fn(f64) -> bool) -> f64 {
    if ok(1.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn check_inputs(config: &JointConfig, u: &[f64], y: &[f64], true_theta: Option<&[f64]>) -> Result<()> {
    config.validate()?;
    if u.len() != y.len() {
        return Err(Error::Dimension {
            what: "output sequence",
            expected: u.len(),
            got: y.len(),
        });
    }
    ensure_finite(u, "input")?;
    ensure_finite(y, "output")?;
    if let Some(theta) = true_theta {
        if theta.len() != config.parameter_len() {
            return Err(Error::Dimension {
                what: "true parameter vector",
                expected: config.parameter_len(),
                got: theta.len(),
            });
        }
    }
    Ok(())
}

/// B-PF-RLS: recursive least squares with particle-filter state estimates.
pub fn bpfrls_run(
    config: &JointConfig,
    u: &[f64],
    y: &[f64],
    true_theta: Option<&[f64]>,
) -> Result<IdentificationResult> {
    let mut config = config.clone();
    config.estimator = Estimator::Bpfrls;
    check_inputs(&config, u, y, true_theta)?;
    let tracker = ParticleTracker {
        set: ParticleSet::init(config.particles, config.n, config.init_spread, config.seed)?,
        weight_mode: config.weight_mode,
        r: config.r.unwrap_or(f64::NAN),
        q_diag: config.q_diag.clone(),
        resample: config.resample,
        mode: config.state_estimate,
    };
    run_loop(config, tracker, u, y, true_theta)
}

/// BSO-RLS: recursive least squares with bilinear-state-observer estimates.
pub fn bsorls_run(
    config: &JointConfig,
    u: &[f64],
    y: &[f64],
    true_theta: Option<&[f64]>,
) -> Result<IdentificationResult> {
    let mut config = config.clone();
    config.estimator = Estimator::Bsorls;
    check_inputs(&config, u, y, true_theta)?;
    let tracker = ObserverTracker {
        state: ObserverState::new(config.n, config.observer_p0),
    };
    run_loop(config, tracker, u, y, true_theta)
}

/// Dispatches on `config.estimator`.
pub fn identify(
    config: &JointConfig,
    u: &[f64],
    y: &[f64],
    true_theta: Option<&[f64]>,
) -> Result<IdentificationResult> {
    match config.estimator {
        Estimator::Bpfrls => bpfrls_run(config, u, y, true_theta),
        Estimator::Bsorls => bsorls_run(config, u, y, true_theta),
    }
}

fn run_loop<T: StateTracker>(
    config: JointConfig,
    mut tracker: T,
    u: &[f64],
    y: &[f64],
    true_theta: Option<&[f64]>,
) -> Result<IdentificationResult> {
    let (n, n_k) = (config.n, config.n_k);
    let len = u.len();
    let mut rls = RlsState::init(config.parameter_len(), config.p0, config.theta0.as_deref())?;
    let mut history = EstimHistory::new(n, n_k);

    let mut x_t = tracker.estimate();
    history.push_state(0, &x_t);

    let mut theta_hist = Vec::with_capacity(len);
    let mut x_hist = Vec::with_capacity(len);
    let mut v_hist = Vec::with_capacity(len);
    let mut w_hist = Vec::with_capacity(len);
    let mut e_hist = Vec::with_capacity(len);
    let mut delta_hist = true_theta.map(|_| Vec::with_capacity(len));
    let mut guard = if config.stability_guard {
        Some(StabilityGuard::new(SystemMatrices::from_slice(
            rls.theta().as_slice(),
            n,
            n_k,
        )?))
    } else {
        None
    };

    for t in 0..len {
        let info = build_phi(&history, t);
        let lambda = config.forgetting.map_or(1.0, |fg| fg.factor(t));
        rls.update_with_forgetting(&info.to_dvector(), y[t], info.beta, lambda)?;
        let theta = rls.theta().as_slice();
        ensure_finite(theta, "parameter estimate")?;
        let mut sys = SystemMatrices::from_slice(theta, n, n_k)?;
        if let Some(g) = guard.as_mut() {
            sys = g.admit(&sys, u[t]).clone();
        }

        let ma_term = history.ma_term(sys.k.as_slice(), t);
        let x_next = tracker.advance(&sys, u[t], y[t], ma_term)?;
        ensure_finite(&x_next, "state estimate")?;

        history.push_input(t, u[t], y[t]);
        history.push_state(t + 1, &x_next);
        let noise = estimate_noises(&x_t, &x_next, y[t], u[t], &sys, &mut history, t);

        if let (Some(d), Some(truth)) = (delta_hist.as_mut(), true_theta) {
            d.push(delta_theta(theta, truth)?);
        }
        theta_hist.push(theta.to_vec());
        x_hist.push(std::mem::replace(&mut x_t, x_next));
        v_hist.push(noise.v);
        w_hist.push(noise.w);
        e_hist.push(noise.e);
    }

    Ok(IdentificationResult {
        theta: theta_hist,
        x_hat: x_hist,
        v_hat: v_hist,
        w_hat: w_hist,
        e_hat: e_hist,
        delta_theta: delta_hist,
        final_state: x_t,
        config,
        generator_id: GENERATOR_ID.to_string(),
    })
}

/// Noise-free simulation of the model encoded by `theta` from `x0`;
/// returns `y(t) = x_1(t)`.
pub fn predict_outputs(theta: &[f64], n: usize, n_k: usize, u: &[f64], x0: &[f64]) -> Result<Vec<f64>> {
    let sys = SystemMatrices::from_slice(theta, n, n_k)?;
    if x0.len() != n {
        return Err(Error::Dimension {
            what: "initial state",
            expected: n,
            got: x0.len(),
        });
    }
    let mut x = x0.to_vec();
    let mut next = vec![0.0; n];
    let mut out = Vec::with_capacity(u.len());
    for &ut in u {
        out.push(x[0]);
        sys.transition_into(&x, ut, &mut next);
        std::mem::swap(&mut x, &mut next);
    }
    Ok(out)
}
