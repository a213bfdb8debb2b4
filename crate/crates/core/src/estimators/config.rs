use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{LmSettings, DEFAULT_HUBER_THRESHOLD};
use crate::factors::FootId;
use crate::imu::{ImuBias, NoiseConfig, DEFAULT_GRAVITY};
use crate::liegroup::Rot3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Invariant EKF.
    Ekf,
    /// Invariant filter with a graph measurement update.
    Iekf,
    /// Fixed-lag smoother with one shared bias.
    FlSingle,
    /// Fixed-lag smoother with a per-event bias random walk.
    FlCombined,
    /// IMU prediction only.
    #[serde(rename = "dr")]
    DeadReckoning,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Ekf,
        Variant::Iekf,
        Variant::FlSingle,
        Variant::FlCombined,
        Variant::DeadReckoning,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Ekf => "ekf",
            Variant::Iekf => "iekf",
            Variant::FlSingle => "fl-single",
            Variant::FlCombined => "fl-combined",
            Variant::DeadReckoning => "dr",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}'")))
    }
}

/// Initial base state and its prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialState {
    /// Roll, pitch, yaw in radians.
    pub rpy: [f64; 3],
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub sigma_roll_pitch: f64,
    pub sigma_yaw: f64,
    pub sigma_position: f64,
    pub sigma_velocity: f64,
    /// Gyro bias prior std of the smoothers, rad/s.
    pub sigma_gyro_bias: f64,
    /// Accelerometer bias prior std of the smoothers, m/s².
    pub sigma_accel_bias: f64,
}

impl Default for InitialState {
    fn default() -> Self {
        Self {
            rpy: [0.0; 3],
            position: [0.0; 3],
            velocity: [0.0; 3],
            sigma_roll_pitch: 0.1,
            sigma_yaw: 0.01,
            sigma_position: 1e-4,
            sigma_velocity: 0.1,
            sigma_gyro_bias: 1e-3,
            sigma_accel_bias: 0.01,
        }
    }
}

impl InitialState {
    pub fn rotation(&self) -> Rot3 {
        Rot3::from_rpy(self.rpy[0], self.rpy[1], self.rpy[2])
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::from(self.position)
    }

    pub fn velocity(&self) -> Vector3<f64> {
        Vector3::from(self.velocity)
    }

    /// 9×9 covariance over `[φ, p, v]`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let s = [
            self.sigma_roll_pitch,
            self.sigma_roll_pitch,
            self.sigma_yaw,
            self.sigma_position,
            self.sigma_position,
            self.sigma_position,
            self.sigma_velocity,
            self.sigma_velocity,
            self.sigma_velocity,
        ];
        DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(9, s.iter().map(|x| x * x)))
    }

    /// Bias prior stds ordered `[gyro, accel]`.
    pub fn bias_sigmas(&self) -> [f64; 6] {
        let (g, a) = (self.sigma_gyro_bias, self.sigma_accel_bias);
        [g, g, g, a, a, a]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    /// Foot ids; the filter assigns slots in this order.
    pub feet: Vec<FootId>,
    pub noise: NoiseConfig,
    pub gravity: [f64; 3],
    /// Fixed bias of the filters and initial bias of the smoothers.
    pub bias: ImuBias,
    /// Longest time between scheduled contact updates, seconds.
    pub max_update_interval: f64,
    /// Smoother window length, seconds.
    pub lag: f64,
    pub height_prior: bool,
    pub terrain_height: f64,
    pub robust_contact: bool,
    /// Huber threshold in units of the contact noise.
    pub huber_threshold: f64,
    pub initial: InitialState,
    pub lm: LmSettings,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            feet: vec![0, 1, 2, 3],
            noise: NoiseConfig::default(),
            gravity: DEFAULT_GRAVITY,
            bias: ImuBias::zero(),
            max_update_interval: 0.1,
            lag: 2.0,
            height_prior: false,
            terrain_height: 0.0,
            robust_contact: false,
            huber_threshold: DEFAULT_HUBER_THRESHOLD,
            initial: InitialState::default(),
            lm: LmSettings::default(),
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if self.feet.is_empty() {
            return Err(Error::Config("at least one foot is required".into()));
        }
        let mut ids = self.feet.clone();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.feet.len() {
            return Err(Error::Config("duplicate foot ids".into()));
        }
        if !(self.max_update_interval > 0.0) {
            return Err(Error::Config("max_update_interval must be positive".into()));
        }
        if !(self.lag > 0.0) {
            return Err(Error::Config("lag must be positive".into()));
        }
        let i = &self.initial;
        for s in [i.sigma_roll_pitch, i.sigma_yaw, i.sigma_position, i.sigma_velocity, i.sigma_gyro_bias, i.sigma_accel_bias] {
            if !(s > 0.0) {
                return Err(Error::Config("initial prior sigmas must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn gravity(&self) -> Vector3<f64> {
        Vector3::from(self.gravity)
    }
}
