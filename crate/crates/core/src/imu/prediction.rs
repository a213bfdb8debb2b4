//! Single-sample prediction `X⁺ = W φ(X) U`.
//!
//! * `W` carries gravity: identity rotation, `½gΔt²` in the position column and
//!   `gΔt` in the velocity column.
//! * `φ` is the automorphism `p ← p + vΔt`. In right-perturbation coordinates it
//!   is exactly linear, with differential `Φ` equal to the identity except
//!   `Φ_pv = Δt I`.
//! * `U` is the body-frame zero-order-hold increment built from the
//!   bias-corrected sample.
//!
//! Because `φ` is an automorphism, `W φ(X̂ Exp ξ) U = X̂⁺ Exp(Ad_{U⁻¹} Φ ξ)`, so
//! the error propagation `A = Ad_{U⁻¹} Φ` does not depend on the state.

use nalgebra::{DMatrix, Matrix3, Vector3};

use super::{ImuBias, ImuSample, NoiseConfig, SlotMap};
use crate::error::{Error, Result};
use crate::liegroup::{so3, SEK3};

fn check_dt(dt: f64) -> Result<()> {
    if dt < 0.0 || !dt.is_finite() {
        return Err(Error::InvalidArgument(format!("negative time step {dt}")));
    }
    Ok(())
}

/// Left factor `W`.
pub fn gravity_factor(gravity: &Vector3<f64>, dt: f64, k: usize, slots: SlotMap) -> Result<SEK3> {
    check_dt(dt)?;
    slots.check(k)?;
    let mut w = SEK3::identity(k);
    w.set_column(slots.position, gravity * (0.5 * dt * dt));
    w.set_column(slots.velocity, gravity * dt);
    Ok(w)
}

/// `φ(R, p, v, f…) = (R, p + vΔt, v, f…)`.
pub fn autonomous_flow(x: &SEK3, dt: f64, slots: SlotMap) -> SEK3 {
    let mut out = x.clone();
    out.set_column(
        slots.position,
        x.column(slots.position) + x.column(slots.velocity) * dt,
    );
    out
}

/// Differential `Φ` of the autonomous flow at the identity.
pub fn flow_differential(dt: f64, k: usize, slots: SlotMap) -> DMatrix<f64> {
    let n = 3 * (k + 1);
    let mut phi = DMatrix::identity(n, n);
    let (p, v) = (3 * (slots.position + 1), 3 * (slots.velocity + 1));
    phi.fixed_view_mut::<3, 3>(p, v)
        .copy_from(&(Matrix3::identity() * dt));
    phi
}

/// Right factor `U` for one zero-order-hold sample. Foothold columns are zero.
pub fn imu_increment(
    sample: &ImuSample,
    bias: &ImuBias,
    dt: f64,
    k: usize,
    slots: SlotMap,
) -> Result<SEK3> {
    check_dt(dt)?;
    slots.check(k)?;
    let (omega, accel) = bias.correct(sample);
    let theta = omega * dt;
    let mut u = SEK3::identity(k);
    u.set_rotation(so3::exp(&theta));
    u.set_column(slots.position, so3::gamma_left(&theta) * accel * (dt * dt));
    u.set_column(slots.velocity, so3::left_jacobian(&theta) * accel * dt);
    Ok(u)
}

/// One IMU-rate prediction. Returns the predicted mean and the error
/// propagation matrix `A = Ad_{U⁻¹} Φ`, whose foothold diagonal blocks are
/// `ΔRᵀ = Ωᵀ`.
pub fn predict(
    x: &SEK3,
    sample: &ImuSample,
    bias: &ImuBias,
    gravity: &Vector3<f64>,
    dt: f64,
    slots: SlotMap,
) -> Result<(SEK3, DMatrix<f64>)> {
    let k = x.k();
    let w = gravity_factor(gravity, dt, k, slots)?;
    let u = imu_increment(sample, bias, dt, k, slots)?;
    let predicted = w.compose(&autonomous_flow(x, dt, slots))?.compose(&u)?;

    let mut a = u.inverse().adjoint() * flow_differential(dt, k, slots);
    let delta_r_t = u.rotation().transpose();
    for column in (0..k).filter(|&c| slots.is_foot(c)) {
        let b = 3 * (column + 1);
        a.fixed_view_mut::<3, 3>(b, b).copy_from(&delta_r_t);
    }
    Ok((predicted, a))
}

/// Additive process noise in the right-perturbation tangent for one step.
///
/// Attitude gets `σ_g²Δt`, velocity `σ_a²Δt` and position the matching
/// `σ_a²Δt³/4` (cross term `σ_a²Δt²/2`). Active foothold slots get the slip
/// density; inactive slots get nothing so they keep their reset covariance.
pub fn process_noise(
    noise: &NoiseConfig,
    dt: f64,
    k: usize,
    slots: SlotMap,
    active_feet: &[bool],
) -> DMatrix<f64> {
    let n = 3 * (k + 1);
    let mut q = DMatrix::zeros(n, n);
    let i3 = Matrix3::<f64>::identity();
    let ga = noise.gyro_noise.powi(2);
    let aa = noise.accel_noise.powi(2);
    let (p, v) = (3 * (slots.position + 1), 3 * (slots.velocity + 1));
    q.fixed_view_mut::<3, 3>(0, 0).copy_from(&(i3 * ga * dt));
    q.fixed_view_mut::<3, 3>(v, v).copy_from(&(i3 * aa * dt));
    q.fixed_view_mut::<3, 3>(p, p)
        .copy_from(&(i3 * aa * dt.powi(3) * 0.25));
    q.fixed_view_mut::<3, 3>(p, v)
        .copy_from(&(i3 * aa * dt * dt * 0.5));
    q.fixed_view_mut::<3, 3>(v, p)
        .copy_from(&(i3 * aa * dt * dt * 0.5));
    let mut foot = 0;
    for column in (0..k).filter(|&c| slots.is_foot(c)) {
        if active_feet.get(foot).copied().unwrap_or(true) {
            let b = 3 * (column + 1);
            q.fixed_view_mut::<3, 3>(b, b)
                .copy_from(&(i3 * noise.slip_density.powi(2) * dt));
        }
        foot += 1;
    }
    q
}
