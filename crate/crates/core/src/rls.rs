//! Recursive least squares for `y(t) - beta(t) = phi(t)' theta + noise`.

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite, Error, Result};

/// Default initial scale of `P(0) = p0 I`.
pub const DEFAULT_P0: f64 = 1e6;
/// Default value of every entry of the initial estimate.
pub const DEFAULT_THETA0: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct RlsState {
    theta: DVector<f64>,
    p: DMatrix<f64>,
    p0: f64,
}

impl RlsState {
    /// `P = p0 I`; `theta0` defaults to `1e-6` in every entry.
    pub fn init(d: usize, p0: f64, theta0: Option<&[f64]>) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("RLS dimension must be positive".into()));
        }
        if !(p0 > 0.0 && p0.is_finite()) {
            return Err(Error::InvalidArgument(format!("p0 must be positive, got {p0}")));
        }
        let theta = match theta0 {
            Some(t) if t.len() != d => {
                return Err(Error::Dimension {
                    what: "initial parameter vector",
                    expected: d,
                    got: t.len(),
                })
            }
            Some(t) => {
                ensure_finite(t, "initial parameter vector")?;
                DVector::from_column_slice(t)
            }
            None => DVector::from_element(d, DEFAULT_THETA0),
        };
        Ok(Self {
            theta,
            p: DMatrix::identity(d, d) * p0,
            p0,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn p0(&self) -> f64 {
        self.p0
    }

    /// One update with regressor `phi`, output `y` and known offset `beta`.
    /// Returns the gain vector `L(t)`.
    pub fn update(&mut self, phi: &DVector<f64>, y: f64, beta: f64) -> Result<DVector<f64>> {
        self.update_with_forgetting(phi, y, beta, 1.0)
    }

    /// As [`RlsState::update`] with forgetting factor `lambda` in `(0, 1]`:
    /// `L = P phi / (lambda + phi' P phi)`, `P <- (P - L (P phi)') / lambda`.
    pub fn update_with_forgetting(
        &mut self,
        phi: &DVector<f64>,
        y: f64,
        beta: f64,
        lambda: f64,
    ) -> Result<DVector<f64>> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "forgetting factor must lie in (0, 1], got {lambda}"
            )));
        }
        if phi.len() != self.dim() {
            return Err(Error::Dimension {
                what: "regressor",
                expected: self.dim(),
                got: phi.len(),
            });
        }
        ensure_finite(phi.as_slice(), "regressor")?;
        ensure_finite(&[y, beta], "RLS output")?;

        let p_phi = &self.p * phi;
        let denom = lambda + phi.dot(&p_phi);
        let gain = &p_phi / denom;
        let innovation = y - beta - phi.dot(&self.theta);
        self.theta.axpy(innovation, &gain, 1.0);
        self.p.ger(-1.0, &gain, &p_phi, 1.0);
        if lambda < 1.0 {
            self.p /= lambda;
        }
        // keep P symmetric
        let sym = (&self.p + self.p.transpose()) * 0.5;
        self.p = sym;
        Ok(gain)
    }
}
