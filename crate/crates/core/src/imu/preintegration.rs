//! IMU preintegration between two navigation states.
//!
//! The increments are accumulated with the same `J_l`/`Γ_l` zero-order-hold
//! kernels as the filter prediction, so chaining single-sample predictions and
//! applying one preintegrated increment give the same relative motion:
//!
//! ```text
//! Δp ← Δp + Δv dt + ΔR Γ_l(θ) a dt²
//! Δv ← Δv + ΔR J_l(θ) a dt
//! ΔR ← ΔR Exp(θ)                       θ = ω dt
//! ```
//!
//! The 9×9 covariance is ordered `[δφ, δp, δv]`, with `δφ` a right
//! perturbation of `ΔR` and `δp`, `δv` additive.

use nalgebra::{Matrix3, SMatrix, Vector3};

use super::{ImuBias, ImuSample, NoiseConfig};
use crate::error::{Error, Result};
use crate::liegroup::so3::{self, hat};
use crate::liegroup::Rot3;

pub type Matrix9 = SMatrix<f64, 9, 9>;
type Matrix9x6 = SMatrix<f64, 9, 6>;

#[derive(Debug, Clone, PartialEq)]
pub struct PreintegratedImu {
    delta_r: Rot3,
    delta_p: Vector3<f64>,
    delta_v: Vector3<f64>,
    dt: f64,
    covariance: Matrix9,
    dr_dbg: Matrix3<f64>,
    dp_dbg: Matrix3<f64>,
    dp_dba: Matrix3<f64>,
    dv_dbg: Matrix3<f64>,
    dv_dba: Matrix3<f64>,
    bias: ImuBias,
    noise: NoiseConfig,
}

impl PreintegratedImu {
    /// Empty increment linearized at `bias`.
    pub fn new(bias: ImuBias, noise: NoiseConfig) -> Self {
        Self {
            delta_r: Rot3::identity(),
            delta_p: Vector3::zeros(),
            delta_v: Vector3::zeros(),
            dt: 0.0,
            covariance: Matrix9::zeros(),
            dr_dbg: Matrix3::zeros(),
            dp_dbg: Matrix3::zeros(),
            dp_dba: Matrix3::zeros(),
            dv_dbg: Matrix3::zeros(),
            dv_dba: Matrix3::zeros(),
            bias,
            noise,
        }
    }

    /// Holds `sample` for `dt` seconds.
    pub fn integrate(&mut self, sample: &ImuSample, dt: f64) -> Result<()> {
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid hold interval {dt}")));
        }
        if dt == 0.0 {
            return Ok(());
        }
        let (omega, a) = self.bias.correct(sample);
        let theta = omega * dt;
        let step = so3::exp(&theta);
        let jl = so3::left_jacobian(&theta);
        let gamma = so3::gamma_left(&theta);
        let jr = so3::right_jacobian(&theta);
        let r = *self.delta_r.matrix();
        let dt2 = dt * dt;

        // Bias Jacobians, all evaluated with the pre-update increments.
        let a_hat = hat(&a);
        let dv_dbg = self.dv_dbg - r * hat(&(jl * a)) * self.dr_dbg * dt + r * a_hat * (0.5 * dt2);
        let dv_dba = self.dv_dba - r * jl * dt;
        self.dp_dbg += self.dv_dbg * dt - r * hat(&(gamma * a)) * self.dr_dbg * dt2
            + r * a_hat * (dt2 * dt / 6.0);
        self.dp_dba += self.dv_dba * dt - r * gamma * dt2;
        self.dv_dbg = dv_dbg;
        self.dv_dba = dv_dba;
        self.dr_dbg = step.transpose() * self.dr_dbg - jr * dt;

        // Covariance.
        let mut f = Matrix9::identity();
        f.fixed_view_mut::<3, 3>(0, 0).copy_from(&step.transpose());
        f.fixed_view_mut::<3, 3>(3, 0)
            .copy_from(&(-r * hat(&(gamma * a)) * dt2));
        f.fixed_view_mut::<3, 3>(3, 6)
            .copy_from(&(Matrix3::identity() * dt));
        f.fixed_view_mut::<3, 3>(6, 0)
            .copy_from(&(-r * hat(&(jl * a)) * dt));
        let mut g = Matrix9x6::zeros();
        g.fixed_view_mut::<3, 3>(0, 0).copy_from(&(jr * dt));
        g.fixed_view_mut::<3, 3>(3, 3).copy_from(&(r * gamma * dt2));
        g.fixed_view_mut::<3, 3>(6, 3).copy_from(&(r * jl * dt));
        let mut qd = SMatrix::<f64, 6, 6>::zeros();
        let (gv, av) = (self.noise.gyro_noise.powi(2) / dt, self.noise.accel_noise.powi(2) / dt);
        for i in 0..3 {
            qd[(i, i)] = gv;
            qd[(i + 3, i + 3)] = av;
        }
        let cov = f * self.covariance * f.transpose() + g * qd * g.transpose();
        self.covariance = (cov + cov.transpose()) * 0.5;

        // Mean.
        self.delta_p += self.delta_v * dt + r * gamma * a * dt2;
        self.delta_v += r * jl * a * dt;
        self.delta_r = &self.delta_r * &step;
        self.dt += dt;
        Ok(())
    }

    pub fn delta_rotation(&self) -> &Rot3 {
        &self.delta_r
    }

    pub fn delta_position(&self) -> &Vector3<f64> {
        &self.delta_p
    }

    pub fn delta_velocity(&self) -> &Vector3<f64> {
        &self.delta_v
    }

    /// Total integrated time.
    pub fn delta_t(&self) -> f64 {
        self.dt
    }

    pub fn covariance(&self) -> &Matrix9 {
        &self.covariance
    }

    /// Linearization bias.
    pub fn bias(&self) -> &ImuBias {
        &self.bias
    }

    pub fn noise(&self) -> &NoiseConfig {
        &self.noise
    }

    /// `∂ΔR/∂b_g` in the right-perturbation chart.
    pub fn dr_dbg(&self) -> &Matrix3<f64> {
        &self.dr_dbg
    }

    /// `(∂Δp/∂b_g, ∂Δp/∂b_a)`.
    pub fn dp_dbias(&self) -> (&Matrix3<f64>, &Matrix3<f64>) {
        (&self.dp_dbg, &self.dp_dba)
    }

    /// `(∂Δv/∂b_g, ∂Δv/∂b_a)`.
    pub fn dv_dbias(&self) -> (&Matrix3<f64>, &Matrix3<f64>) {
        (&self.dv_dbg, &self.dv_dba)
    }

    /// First-order increments at `new_bias`.
    pub fn bias_correct(&self, new_bias: &ImuBias) -> (Rot3, Vector3<f64>, Vector3<f64>) {
        let dbg = new_bias.gyro - self.bias.gyro;
        let dba = new_bias.accel - self.bias.accel;
        if dbg == Vector3::zeros() && dba == Vector3::zeros() {
            return (self.delta_r, self.delta_p, self.delta_v);
        }
        let r = &self.delta_r * &so3::exp(&(self.dr_dbg * dbg));
        let p = self.delta_p + self.dp_dbg * dbg + self.dp_dba * dba;
        let v = self.delta_v + self.dv_dbg * dbg + self.dv_dba * dba;
        (r, p, v)
    }
}

/// Preintegrates `samples` up to `end_time`. Each sample is held until the next
/// sample's timestamp, and the last one until `end_time`.
pub fn preintegrate(
    samples: &[ImuSample],
    end_time: f64,
    bias: ImuBias,
    noise: NoiseConfig,
) -> Result<PreintegratedImu> {
    let last = samples
        .last()
        .ok_or_else(|| Error::InvalidArgument("no IMU samples to preintegrate".into()))?;
    if end_time < last.t {
        return Err(Error::OutOfOrder(format!(
            "end time {end_time} precedes last sample {}",
            last.t
        )));
    }
    let mut pim = PreintegratedImu::new(bias, noise);
    for (i, sample) in samples.iter().enumerate() {
        let next = samples.get(i + 1).map_or(end_time, |s| s.t);
        if next <= sample.t && i + 1 < samples.len() {
            return Err(Error::OutOfOrder(format!(
                "sample times not increasing at index {}: {} then {next}",
                i + 1,
                sample.t
            )));
        }
        pim.integrate(sample, next - sample.t)?;
    }
    Ok(pim)
}
