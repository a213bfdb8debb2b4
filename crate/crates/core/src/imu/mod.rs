//! IMU measurement types, the single-sample left-linear prediction and
//! multi-sample preintegration.

mod prediction;
mod preintegration;

pub use prediction::{
    autonomous_flow, flow_differential, gravity_factor, imu_increment, predict, process_noise,
};
pub use preintegration::{preintegrate, PreintegratedImu};

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default gravity in the navigation frame (z up).
pub const DEFAULT_GRAVITY: [f64; 3] = [0.0, 0.0, -9.81];

/// One IMU reading: body-frame angular rate (rad/s) and specific force (m/s²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

impl ImuSample {
    pub fn new(t: f64, gyro: Vector3<f64>, accel: Vector3<f64>) -> Self {
        Self { t, gyro, accel }
    }
}

/// Gyroscope and accelerometer biases.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ImuBias {
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

impl ImuBias {
    pub fn new(gyro: Vector3<f64>, accel: Vector3<f64>) -> Self {
        Self { gyro, accel }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// `[b_g; b_a]`.
    pub fn to_vector(&self) -> Vector6<f64> {
        let mut v = Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.gyro);
        v.fixed_rows_mut::<3>(3).copy_from(&self.accel);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            gyro: Vector3::new(v[0], v[1], v[2]),
            accel: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn correct(&self, sample: &ImuSample) -> (Vector3<f64>, Vector3<f64>) {
        (sample.gyro - self.gyro, sample.accel - self.accel)
    }
}

/// Sensor and measurement noise parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Gyro white noise, rad/s/√Hz.
    pub gyro_noise: f64,
    /// Accelerometer white noise, m/s²/√Hz.
    pub accel_noise: f64,
    /// Gyro bias random walk, rad/s²/√Hz.
    pub gyro_bias_rw: f64,
    /// Accelerometer bias random walk, m/s³/√Hz.
    pub accel_bias_rw: f64,
    /// Contact measurement std, m.
    pub contact_sigma: f64,
    /// Foothold initialization std, m.
    pub foothold_init_sigma: f64,
    /// Terrain height prior std, m.
    pub height_sigma: f64,
    /// Foothold slip density in the filter process noise, m/√s.
    pub slip_density: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            gyro_noise: 1e-3,
            accel_noise: 1e-2,
            gyro_bias_rw: 1e-5,
            accel_bias_rw: 1e-4,
            contact_sigma: 0.03,
            foothold_init_sigma: 1e3,
            height_sigma: 0.01,
            slip_density: 1e-3,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("gyro_noise", self.gyro_noise),
            ("accel_noise", self.accel_noise),
            ("gyro_bias_rw", self.gyro_bias_rw),
            ("accel_bias_rw", self.accel_bias_rw),
            ("contact_sigma", self.contact_sigma),
            ("foothold_init_sigma", self.foothold_init_sigma),
            ("height_sigma", self.height_sigma),
            ("slip_density", self.slip_density),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        Ok(())
    }
}

/// Which SE_K(3) columns hold position and velocity; every other column is a
/// foothold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotMap {
    pub position: usize,
    pub velocity: usize,
}

impl Default for SlotMap {
    fn default() -> Self {
        Self {
            position: 0,
            velocity: 1,
        }
    }
}

impl SlotMap {
    pub(crate) fn check(&self, k: usize) -> Result<()> {
        if self.position >= k || self.velocity >= k || self.position == self.velocity {
            return Err(Error::InvalidArgument(format!(
                "slots p={} v={} invalid for K={k}",
                self.position, self.velocity
            )));
        }
        Ok(())
    }

    pub fn is_foot(&self, column: usize) -> bool {
        column != self.position && column != self.velocity
    }
}
