//! The semidirect product SE_K(3) = SO(3) ⋉ (ℝ³)ᴷ.
//!
//! An element `(R, x_1, …, x_K)` embeds as the `(K+3)×(K+3)` matrix
//! `[[R, X], [0, I_K]]` with `X = [x_1 ⋯ x_K]`, so
//! `(R, x_i)(S, y_i) = (RS, x_i + R y_i)`.
//!
//! Tangent vectors are ordered `[φ, u_1, …, u_K]` and perturbations are applied
//! on the right, `X = X̂ Exp(ξ)`. The exponential is
//! `Exp(φ, u_i) = (Exp(φ), J_l(φ) u_i)`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::so3::{self, hat, Rot3};
use crate::error::{Error, Result};

/// Rotation angle at and above which [`SEK3::log`] refuses to answer.
pub const LOG_ANGLE_LIMIT: f64 = std::f64::consts::PI - 1e-6;

/// Tangent vector `[φ, u_1, …, u_K]` of SE_K(3).
#[derive(Debug, Clone, PartialEq)]
pub struct TangentK(DVector<f64>);

impl TangentK {
    pub fn zeros(k: usize) -> Self {
        Self(DVector::zeros(3 * (k + 1)))
    }

    pub fn from_vector(v: DVector<f64>) -> Result<Self> {
        if v.len() < 3 || v.len() % 3 != 0 {
            return Err(Error::Dimension(format!(
                "tangent length {} is not 3(K+1)",
                v.len()
            )));
        }
        Ok(Self(v))
    }

    pub fn from_parts(phi: Vector3<f64>, columns: &[Vector3<f64>]) -> Self {
        let mut v = DVector::zeros(3 * (columns.len() + 1));
        v.fixed_rows_mut::<3>(0).copy_from(&phi);
        for (i, c) in columns.iter().enumerate() {
            v.fixed_rows_mut::<3>(3 * (i + 1)).copy_from(c);
        }
        Self(v)
    }

    /// Number of vector columns.
    pub fn k(&self) -> usize {
        self.0.len() / 3 - 1
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn phi(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    /// Column block `i` (zero based).
    pub fn u(&self, i: usize) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3 * (i + 1)).into_owned()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.0
    }
}

/// Element of SE_K(3). `K` is fixed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SEK3 {
    rotation: Rot3,
    columns: Vec<Vector3<f64>>,
}

impl SEK3 {
    pub fn identity(k: usize) -> Self {
        Self {
            rotation: Rot3::identity(),
            columns: vec![Vector3::zeros(); k],
        }
    }

    pub fn new(rotation: Rot3, columns: Vec<Vector3<f64>>) -> Self {
        Self { rotation, columns }
    }

    pub fn k(&self) -> usize {
        self.columns.len()
    }

    pub fn tangent_dim(&self) -> usize {
        3 * (self.columns.len() + 1)
    }

    pub fn rotation(&self) -> &Rot3 {
        &self.rotation
    }

    pub fn set_rotation(&mut self, rotation: Rot3) {
        self.rotation = rotation;
    }

    pub fn column(&self, i: usize) -> &Vector3<f64> {
        &self.columns[i]
    }

    pub fn columns(&self) -> &[Vector3<f64>] {
        &self.columns
    }

    pub fn set_column(&mut self, i: usize, value: Vector3<f64>) {
        self.columns[i] = value;
    }

    fn check_same_k(&self, other: &Self) -> Result<()> {
        if self.k() != other.k() {
            return Err(Error::Dimension(format!(
                "SE_K(3) column counts differ: {} vs {}",
                self.k(),
                other.k()
            )));
        }
        Ok(())
    }

    /// Group product `self · other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        self.check_same_k(other)?;
        let r = self.rotation.matrix();
        let columns = self
            .columns
            .iter()
            .zip(&other.columns)
            .map(|(x, y)| x + r * y)
            .collect();
        Ok(Self {
            rotation: &self.rotation * &other.rotation,
            columns,
        })
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: self.rotation.inverse(),
            columns: self.columns.iter().map(|x| -(rt * x)).collect(),
        }
    }

    /// `self⁻¹ · other` without forming the inverse explicitly.
    pub fn between(&self, other: &Self) -> Result<Self> {
        self.check_same_k(other)?;
        let rt = self.rotation.transpose();
        Ok(Self {
            rotation: Rot3::from_matrix_unchecked(rt * other.rotation.matrix()).normalized(),
            columns: self
                .columns
                .iter()
                .zip(&other.columns)
                .map(|(x, y)| rt * (y - x))
                .collect(),
        })
    }

    pub fn exp(xi: &TangentK) -> Self {
        let phi = xi.phi();
        let jl = so3::left_jacobian(&phi);
        Self {
            rotation: so3::exp(&phi),
            columns: (0..xi.k()).map(|i| jl * xi.u(i)).collect(),
        }
    }

    /// Inverse of [`SEK3::exp`] for rotation angles below [`LOG_ANGLE_LIMIT`].
    pub fn log(&self) -> Result<TangentK> {
        let angle = self.rotation.angle();
        if angle >= LOG_ANGLE_LIMIT {
            return Err(Error::LogDomain { angle });
        }
        let phi = self.rotation.log();
        let jl_inv = so3::left_jacobian_inverse(&phi);
        let columns: Vec<_> = self.columns.iter().map(|x| jl_inv * x).collect();
        Ok(TangentK::from_parts(phi, &columns))
    }

    /// `self · Exp(delta)`.
    pub fn retract(&self, delta: &TangentK) -> Result<Self> {
        self.compose(&Self::exp(delta))
    }

    /// `Log(self⁻¹ · other)`.
    pub fn local(&self, other: &Self) -> Result<TangentK> {
        self.between(other)?.log()
    }

    /// Adjoint matrix: `X Exp(ξ) X⁻¹ = Exp(Ad_X ξ)`.
    pub fn adjoint(&self) -> DMatrix<f64> {
        let n = self.tangent_dim();
        let r = self.rotation.matrix();
        let mut ad = DMatrix::zeros(n, n);
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        for (i, x) in self.columns.iter().enumerate() {
            let row = 3 * (i + 1);
            ad.fixed_view_mut::<3, 3>(row, 0).copy_from(&(hat(x) * r));
            ad.fixed_view_mut::<3, 3>(row, row).copy_from(r);
        }
        ad
    }

    /// `(K+3)×(K+3)` homogeneous embedding.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let k = self.k();
        let mut m = DMatrix::identity(k + 3, k + 3);
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rotation.matrix());
        for (i, x) in self.columns.iter().enumerate() {
            m.fixed_view_mut::<3, 1>(0, 3 + i).copy_from(x);
        }
        m
    }
}

/// Matrix of the Lie bracket `η ↦ [ξ, η]` (so that `Ad_{Exp ξ} = exp(ad_ξ)`).
pub fn ad_matrix(xi: &TangentK) -> DMatrix<f64> {
    let n = xi.dim();
    let phi_hat = hat(&xi.phi());
    let mut ad = DMatrix::zeros(n, n);
    ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&phi_hat);
    for i in 0..xi.k() {
        let row = 3 * (i + 1);
        ad.fixed_view_mut::<3, 3>(row, 0).copy_from(&hat(&xi.u(i)));
        ad.fixed_view_mut::<3, 3>(row, row).copy_from(&phi_hat);
    }
    ad
}

/// Right Jacobian `J_r(ξ) = Σ (-ad_ξ)ⁿ / (n+1)!`, so that
/// `Exp(ξ + δ) ≈ Exp(ξ) Exp(J_r(ξ) δ)`.
pub fn right_jacobian(xi: &TangentK) -> DMatrix<f64> {
    let n = xi.dim();
    let minus_ad = -ad_matrix(xi);
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for order in 1..60 {
        term = &term * &minus_ad / (order as f64 + 1.0);
        sum += &term;
        if term.amax() < 1e-18 {
            break;
        }
    }
    sum
}

/// `d/dδ Log(Y Exp(δ))` at `δ = 0` for `ξ = Log(Y)`.
pub fn right_jacobian_inverse(xi: &TangentK) -> DMatrix<f64> {
    if xi.as_vector().iter().all(|&v| v == 0.0) {
        return DMatrix::identity(xi.dim(), xi.dim());
    }
    let jr = right_jacobian(xi);
    jr.clone()
        .try_inverse()
        .unwrap_or_else(|| DMatrix::identity(jr.nrows(), jr.ncols()))
}

/// Rotation-only element with zero columns.
pub fn pure_rotation(rotation: Rot3, k: usize) -> SEK3 {
    SEK3::new(rotation, vec![Vector3::zeros(); k])
}

/// `Matrix3` block `(i, j)` of a block matrix with 3×3 blocks.
pub fn block3(m: &DMatrix<f64>, i: usize, j: usize) -> Matrix3<f64> {
    m.fixed_view::<3, 3>(3 * i, 3 * j).into_owned()
}
