//! SO(3) integration kernels.
//!
//! With `θ` a rotation vector, `Ω = hat(θ)` and `α = |θ|`:
//!
//! ```text
//! Exp(θ)  = I + A Ω + B Ω²          A = sin α / α
//! J_l(θ)  = I + B Ω + C Ω²          B = (1 - cos α) / α²
//! Γ_l(θ)  = ½ I + C Ω + E Ω²        C = (α - sin α) / α³
//!                                   E = (α² - 2 + 2 cos α) / (2 α⁴)
//! ```
//!
//! `Γ_l(ωΔt) a Δt²` is the position increment of a constant body-frame specific
//! force `a` held over `Δt` while rotating at `ω`, and `J_l(ωΔt) a Δt` is the
//! matching velocity increment.
//!
//! Below [`SERIES_THRESHOLD`] every coefficient is evaluated from its Taylor
//! series. The closed forms of `C` and `E` subtract nearly equal numbers, so
//! the threshold sits where the closed forms are still accurate to ~1e-13.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Rotation angle below which the series branches are used.
pub const SERIES_THRESHOLD: f64 = 0.1;

/// Orthogonality defect above which a rotation is projected back onto SO(3).
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-9;

/// Skew-symmetric matrix with `hat(v) w = v × w`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`] (uses the antisymmetric part).
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

#[derive(Debug, Clone, Copy)]
struct Coefficients {
    a: f64,
    b: f64,
    c: f64,
    e: f64,
}

fn coefficients(alpha: f64) -> Coefficients {
    let a2 = alpha * alpha;
    if alpha < SERIES_THRESHOLD {
        let a4 = a2 * a2;
        let a6 = a4 * a2;
        let a8 = a4 * a4;
        Coefficients {
            a: 1.0 - a2 / 6.0 + a4 / 120.0 - a6 / 5040.0 + a8 / 362_880.0,
            b: 0.5 - a2 / 24.0 + a4 / 720.0 - a6 / 40_320.0 + a8 / 3_628_800.0,
            c: 1.0 / 6.0 - a2 / 120.0 + a4 / 5040.0 - a6 / 362_880.0 + a8 / 39_916_800.0,
            e: 1.0 / 24.0 - a2 / 720.0 + a4 / 40_320.0 - a6 / 3_628_800.0
                + a8 / 479_001_600.0,
        }
    } else {
        let s = alpha.sin();
        let half = (0.5 * alpha).sin();
        // α² - 2 + 2cos α = (α - 2 sin(α/2)) (α + 2 sin(α/2))
        let e_num = (alpha - 2.0 * half) * (alpha + 2.0 * half);
        Coefficients {
            a: s / alpha,
            b: 2.0 * half * half / a2,
            c: (alpha - s) / (a2 * alpha),
            e: e_num / (2.0 * a2 * a2),
        }
    }
}

/// Coefficient of Ω² in `J_l⁻¹(θ) = I - ½Ω + D Ω²`.
fn inverse_jacobian_coefficient(alpha: f64) -> f64 {
    if alpha < SERIES_THRESHOLD {
        let a2 = alpha * alpha;
        let a4 = a2 * a2;
        1.0 / 12.0 + a2 / 720.0 + a4 / 30_240.0 + a4 * a2 / 1_209_600.0
            + a4 * a4 / 47_900_160.0
    } else {
        let half = 0.5 * alpha;
        (1.0 - half / half.tan()) / (alpha * alpha)
    }
}

/// Rodrigues' formula.
pub fn exp(theta: &Vector3<f64>) -> Rot3 {
    let k = coefficients(theta.norm());
    let omega = hat(theta);
    Rot3(Matrix3::identity() + omega * k.a + omega * omega * k.b)
}

/// Rotation vector of `r`, valid on the whole group (angle in `[0, π]`).
pub fn log(r: &Rot3) -> Vector3<f64> {
    let m = &r.0;
    let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let w = vee(m);
    let sin = w.norm();
    let angle = sin.atan2(cos);
    if angle < SERIES_THRESHOLD {
        // angle / sin(angle)
        let a2 = angle * angle;
        w * (1.0 + a2 / 6.0 + 7.0 * a2 * a2 / 360.0 + 31.0 * a2 * a2 * a2 / 15_120.0)
    } else if angle < std::f64::consts::PI - 1e-3 {
        w * (angle / sin)
    } else {
        // Near π the antisymmetric part vanishes; recover the axis from R + Rᵀ.
        let sym = (m + m.transpose()) * 0.5 - Matrix3::identity() * cos;
        let scale = 1.0 - cos;
        let diag = sym.diagonal();
        let i = diag.imax();
        let mut axis: Vector3<f64> = sym.column(i).into_owned() / (diag[i] * scale).sqrt();
        axis /= axis.norm();
        if axis.dot(&w) < 0.0 {
            axis = -axis;
        }
        axis * angle
    }
}

/// Left Jacobian `J_l(θ)`.
pub fn left_jacobian(theta: &Vector3<f64>) -> Matrix3<f64> {
    let k = coefficients(theta.norm());
    let omega = hat(theta);
    Matrix3::identity() + omega * k.b + omega * omega * k.c
}

/// Inverse of the left Jacobian.
pub fn left_jacobian_inverse(theta: &Vector3<f64>) -> Matrix3<f64> {
    let d = inverse_jacobian_coefficient(theta.norm());
    let omega = hat(theta);
    Matrix3::identity() - omega * 0.5 + omega * omega * d
}

/// Right Jacobian, `J_r(θ) = J_l(-θ)`.
pub fn right_jacobian(theta: &Vector3<f64>) -> Matrix3<f64> {
    left_jacobian(&-theta)
}

pub fn right_jacobian_inverse(theta: &Vector3<f64>) -> Matrix3<f64> {
    left_jacobian_inverse(&-theta)
}

/// Left Gamma matrix `Γ_l(θ)`, the double integral of `Exp`.
pub fn gamma_left(theta: &Vector3<f64>) -> Matrix3<f64> {
    let k = coefficients(theta.norm());
    let omega = hat(theta);
    Matrix3::identity() * 0.5 + omega * k.c + omega * omega * k.e
}

/// A rotation matrix.
#[derive(Clone, Copy, PartialEq)]
pub struct Rot3(Matrix3<f64>);

impl Rot3 {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates orthonormality and a positive determinant within
    /// [`ORTHOGONALITY_TOLERANCE`] (scaled for accumulated roundoff).
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let defect = orthogonality_defect(&m);
        let det = m.determinant();
        if defect > 1e3 * ORTHOGONALITY_TOLERANCE || (det - 1.0).abs() > 1e3 * ORTHOGONALITY_TOLERANCE
        {
            return Err(Error::InvalidArgument(format!(
                "not a rotation matrix (orthogonality defect {defect:e}, det {det})"
            )));
        }
        Ok(Self(m).normalized())
    }

    /// Wraps a matrix without checking it; callers guarantee it is a rotation.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        exp(&(axis.normalize() * angle))
    }

    /// `Rz(yaw) Ry(pitch) Rx(roll)`.
    pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Self {
        let (sr, cr) = roll.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let (sy, cy) = yaw.sin_cos();
        Self(Matrix3::new(
            cy * cp,
            cy * sp * sr - sy * cr,
            cy * sp * cr + sy * sr,
            sy * cp,
            sy * sp * sr + cy * cr,
            sy * sp * cr - cy * sr,
            -sp,
            cp * sr,
            cp * cr,
        ))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn transpose(&self) -> Matrix3<f64> {
        self.0.transpose()
    }

    pub fn log(&self) -> Vector3<f64> {
        log(self)
    }

    /// Geodesic distance to the identity, in radians.
    pub fn angle(&self) -> f64 {
        let cos = ((self.0.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        vee(&self.0).norm().atan2(cos)
    }

    pub fn orthogonality_defect(&self) -> f64 {
        orthogonality_defect(&self.0)
    }

    /// Projects onto the nearest rotation when the defect exceeds
    /// [`ORTHOGONALITY_TOLERANCE`]; otherwise returns `self` untouched.
    pub fn normalized(self) -> Self {
        if orthogonality_defect(&self.0) <= ORTHOGONALITY_TOLERANCE {
            return self;
        }
        let svd = self.0.svd(true, true);
        let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        Self(r)
    }

    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.0 * v
    }
}

fn orthogonality_defect(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).abs().max()
}

impl Mul for Rot3 {
    type Output = Rot3;
    fn mul(self, rhs: Rot3) -> Rot3 {
        Rot3(self.0 * rhs.0).normalized()
    }
}

impl Mul<&Rot3> for &Rot3 {
    type Output = Rot3;
    fn mul(self, rhs: &Rot3) -> Rot3 {
        Rot3(self.0 * rhs.0).normalized()
    }
}

impl Mul<Vector3<f64>> for &Rot3 {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

impl fmt::Debug for Rot3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Rot3(log={:?})", log(self).as_slice())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn matrix_exp_series(omega: &Matrix3<f64>, offset: usize, terms: usize) -> Matrix3<f64> {
        // Σ Ωⁿ / (n + offset)!
        let mut sum = Matrix3::zeros();
        let mut power = Matrix3::identity();
        for n in 0..terms {
            let mut fact = 1.0;
            for i in 1..=(n + offset) {
                fact *= i as f64;
            }
            sum += power / fact;
            power *= omega;
        }
        sum
    }

    #[test]
    fn exp_identity_and_quarter_turn() {
        assert_eq!(*exp(&Vector3::zeros()).matrix(), Matrix3::identity());
        let r = exp(&Vector3::new(FRAC_PI_2, 0.0, 0.0));
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert!((r.matrix() - expected).abs().max() < 1e-15);
    }

    #[test]
    fn exp_matches_power_series() {
        let theta = Vector3::new(0.1, -0.2, 0.15).normalize() * 0.3;
        let series = matrix_exp_series(&hat(&theta), 0, 13);
        assert!((exp(&theta).matrix() - series).abs().max() < 1e-12);
    }

    #[test]
    fn left_jacobian_and_gamma_match_power_series() {
        for &angle in &[1e-7, 0.05, 0.3, 1.0, 2.5] {
            let theta = Vector3::new(0.3, 0.8, -0.5).normalize() * angle;
            let omega = hat(&theta);
            let jl = matrix_exp_series(&omega, 1, 30);
            let gamma = matrix_exp_series(&omega, 2, 30);
            assert!((left_jacobian(&theta) - jl).abs().max() < 1e-13, "J_l at {angle}");
            assert!((gamma_left(&theta) - gamma).abs().max() < 1e-13, "Γ_l at {angle}");
        }
    }

    #[test]
    fn zero_angle_values() {
        assert_eq!(left_jacobian(&Vector3::zeros()), Matrix3::identity());
        assert_eq!(gamma_left(&Vector3::zeros()), Matrix3::identity() * 0.5);
    }

    #[test]
    fn coefficients_continuous_across_threshold() {
        let below = coefficients(SERIES_THRESHOLD * (1.0 - 1e-12));
        let above = coefficients(SERIES_THRESHOLD * (1.0 + 1e-12));
        assert!((below.a - above.a).abs() < 1e-13);
        assert!((below.b - above.b).abs() < 1e-13);
        assert!((below.c - above.c).abs() < 1e-13);
        assert!((below.e - above.e).abs() < 1e-13);
        let d_below = inverse_jacobian_coefficient(SERIES_THRESHOLD * (1.0 - 1e-12));
        let d_above = inverse_jacobian_coefficient(SERIES_THRESHOLD * (1.0 + 1e-12));
        assert!((d_below - d_above).abs() < 1e-13);
    }

    #[test]
    fn tiny_angle_series_matches_leading_terms() {
        let k = coefficients(1e-7);
        assert!((k.c - 1.0 / 6.0).abs() < 1e-15);
        assert!((k.e - 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn log_inverts_exp_including_near_pi() {
        for &angle in &[0.0, 1e-9, 0.05, 0.7, 2.0, 3.1, std::f64::consts::PI - 1e-7] {
            let theta = Vector3::new(-0.2, 0.9, 0.4).normalize() * angle;
            let back = log(&exp(&theta));
            assert!((back - theta).norm() < 1e-9, "angle {angle}: {back:?}");
        }
    }

    #[test]
    fn left_jacobian_inverse_is_inverse() {
        for &angle in &[0.0, 0.01, 0.5, 2.9] {
            let theta = Vector3::new(1.0, 2.0, -0.5).normalize() * angle;
            let prod = left_jacobian(&theta) * left_jacobian_inverse(&theta);
            assert!((prod - Matrix3::identity()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn normalization_repairs_drift() {
        let r = exp(&Vector3::new(0.3, 0.1, -0.7));
        let drifted = Rot3::from_matrix_unchecked(r.matrix() * (1.0 + 1e-7));
        assert!(drifted.orthogonality_defect() > ORTHOGONALITY_TOLERANCE);
        let fixed = drifted.normalized();
        assert!(fixed.orthogonality_defect() < 1e-14);
        assert!((fixed.matrix() - r.matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn from_matrix_rejects_non_rotations() {
        assert!(Rot3::from_matrix(Matrix3::identity() * 2.0).is_err());
        assert!(Rot3::from_matrix(-Matrix3::identity()).is_err());
    }

    #[test]
    fn rpy_matches_exp_composition() {
        let r = Rot3::from_rpy(0.1, -0.2, 0.3);
        let composed = exp(&Vector3::new(0.0, 0.0, 0.3))
            * exp(&Vector3::new(0.0, -0.2, 0.0))
            * exp(&Vector3::new(0.1, 0.0, 0.0));
        assert!((r.matrix() - composed.matrix()).abs().max() < 1e-14);
    }
}
