//! Bilinear state observer used by the BSO-RLS baseline.
//!
//! A predictor-form Kalman-style observer with input-dependent transition
//! `M = A + B u(t)` and unit measurement-noise variance:
//!
//! ```text
//! G      = M P H' / (1 + H P H')
//! x(t+1) = A x + B x u + f u + G (y - x_1 - sum_i k_i v(t-i))
//! P(t+1) = M P M' - G H P M'
//! ```

use nalgebra::{DMatrix, DVector};

use crate::model::SystemMatrices;

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverState {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl ObserverState {
    /// Observer at the rest state with covariance `p_init * I`.
    pub fn new(n: usize, p_init: f64) -> Self {
        Self {
            x: DVector::zeros(n),
            p: DMatrix::identity(n, n) * p_init,
        }
    }
}

/// One observer step. `ma_term` is the known colored-noise contribution
/// `sum_i k_i v(t-i)`. Returns the next state and the gain `G`.
pub fn bso_step(
    state: &ObserverState,
    sys: &SystemMatrices,
    u: f64,
    y: f64,
    ma_term: f64,
) -> (ObserverState, DVector<f64>) {
    let m = sys.effective_transition(u);
    let p = &state.p;
    // P H' is the first column of P, H P H' its first entry.
    let p_h = p.column(0).into_owned();
    let gain = (&m * &p_h) / (1.0 + p[(0, 0)]);

    let innovation = y - state.x[0] - ma_term;
    let mut x = DVector::from_vec(sys.transition(state.x.as_slice(), u));
    x.axpy(innovation, &gain, 1.0);

    // G H P M' = G (P H')' M'
    let m_t = m.transpose();
    let mut p_next = &m * p * &m_t;
    let hp_mt = p_h.transpose() * &m_t;
    p_next.ger(-1.0, &gain, &hp_mt.transpose(), 1.0);
    let p_next = (&p_next + p_next.transpose()) * 0.5;

    (ObserverState { x, p: p_next }, gain)
}
