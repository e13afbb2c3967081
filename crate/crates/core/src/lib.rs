//! Joint state and parameter estimation for single-output bilinear
//! state-space systems in observer canonical form,
//!
//! ```text
//! x(t+1) = A x(t) + B x(t) u(t) + f u(t) + w(t)
//! y(t)   = x_1(t) + e(t),   e(t) = v(t) + k_1 v(t-1) + ... + k_nk v(t-nk)
//! ```
//!
//! The crate provides forward simulation ([`model`]), excitation and noise
//! generation ([`signals`]), the regression form `y(t) = phi(t)' theta +
//! beta(t) + v(t)` ([`regressor`]), a particle filter with a Gaussian and a
//! variance-free weighting rule ([`pf`]), recursive least squares ([`rls`]),
//! a bilinear state observer baseline ([`bso`]), the joint identification
//! loops ([`joint`]) and evaluation metrics ([`metrics`]).

#![allow(clippy::needless_range_loop)]

pub mod bso;
pub mod error;
pub mod joint;
pub mod metrics;
pub mod model;
pub mod pf;
pub mod regressor;
pub mod rls;
pub mod signals;

pub use error::{Error, Result};
pub use joint::{
    bpfrls_run, bsorls_run, predict_outputs, Estimator, IdentificationResult, JointConfig, ResamplePolicy,
    StateEstimateMode, WeightMode,
};
pub use model::{BilinearModel, ParameterVector, SystemMatrices, Trajectory};
pub use signals::{NoiseStreams, GENERATOR_ID};
