use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default Huber threshold, in whitened units.
pub const DEFAULT_HUBER_THRESHOLD: f64 = 1.345;

/// Gaussian noise stored as a square-root information matrix, optionally
/// wrapped in a Huber loss.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    sqrt_information: DMatrix<f64>,
    huber: Option<f64>,
}

impl NoiseModel {
    /// From a covariance `Σ = L Lᵀ`; the whitening matrix is `L⁻¹`.
    pub fn from_covariance(covariance: &DMatrix<f64>) -> Result<Self> {
        if !covariance.is_square() {
            return Err(Error::Dimension("noise covariance is not square".into()));
        }
        let n = covariance.nrows();
        let sym = (covariance + covariance.transpose()) * 0.5;
        let chol = sym
            .cholesky()
            .ok_or_else(|| Error::Singular("noise covariance is not positive definite".into()))?;
        let l_inv = chol
            .l()
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or_else(|| Error::Singular("noise covariance factor".into()))?;
        Ok(Self {
            sqrt_information: l_inv,
            huber: None,
        })
    }

    pub fn from_sqrt_information(sqrt_information: DMatrix<f64>) -> Self {
        Self {
            sqrt_information,
            huber: None,
        }
    }

    pub fn isotropic(dim: usize, sigma: f64) -> Self {
        Self::diagonal(&vec![sigma; dim])
    }

    pub fn diagonal(sigmas: &[f64]) -> Self {
        let d = DVector::from_iterator(sigmas.len(), sigmas.iter().map(|s| 1.0 / s));
        Self::from_sqrt_information(DMatrix::from_diagonal(&d))
    }

    pub fn unit(dim: usize) -> Self {
        Self::from_sqrt_information(DMatrix::identity(dim, dim))
    }

    pub fn with_huber(mut self, threshold: f64) -> Self {
        self.huber = Some(threshold);
        self
    }

    pub fn huber(&self) -> Option<f64> {
        self.huber
    }

    pub fn dim(&self) -> usize {
        self.sqrt_information.nrows()
    }

    pub fn sqrt_information(&self) -> &DMatrix<f64> {
        &self.sqrt_information
    }

    pub fn whiten(&self, residual: &DVector<f64>) -> DVector<f64> {
        &self.sqrt_information * residual
    }

    /// Reweighting factor `w(‖e‖)` for a whitened residual.
    pub fn weight(&self, whitened: &DVector<f64>) -> f64 {
        match self.huber {
            Some(k) => {
                let norm = whitened.norm();
                if norm <= k {
                    1.0
                } else {
                    k / norm
                }
            }
            None => 1.0,
        }
    }

    /// Loss of a whitened residual: `½‖e‖²`, or the Huber loss.
    pub fn loss(&self, whitened: &DVector<f64>) -> f64 {
        let norm = whitened.norm();
        match self.huber {
            Some(k) if norm > k => k * norm - 0.5 * k * k,
            _ => 0.5 * norm * norm,
        }
    }
}
