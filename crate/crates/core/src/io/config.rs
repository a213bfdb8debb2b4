//! Replay configuration file (TOML).
//!
//! ```toml
//! variant = "iekf"
//! output_rate = 50.0
//!
//! [estimator]
//! feet = [0, 1, 2, 3]
//! max_update_interval = 0.1
//!
//! [estimator.noise]
//! contact_sigma = 0.03
//!
//! [extrinsics.contact]
//! rotation = [0.0, 0.0, 0.0, 1.0]
//! translation = [0.1, 0.0, 0.0]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Extrinsic;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorConfig, Variant};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Extrinsics {
    /// IMU frame to body frame.
    pub imu: Extrinsic,
    /// Contact (kinematics) frame to body frame.
    pub contact: Extrinsic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplayConfig {
    /// Default variant when none is given on the command line.
    pub variant: Option<Variant>,
    /// Rate of dead-reckoned outputs between updates, Hz. Zero disables them.
    pub output_rate: f64,
    pub estimator: EstimatorConfig,
    pub extrinsics: Extrinsics,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            variant: None,
            output_rate: 50.0,
            estimator: EstimatorConfig::default(),
            extrinsics: Extrinsics::default(),
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.output_rate >= 0.0 && self.output_rate.is_finite()) {
            return Err(Error::Config(format!("output_rate must be non-negative, got {}", self.output_rate)));
        }
        self.extrinsics.imu.validate()?;
        self.extrinsics.contact.validate()?;
        self.estimator.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

pub fn load_replay_config(path: impl AsRef<Path>) -> Result<ReplayConfig> {
    ReplayConfig::from_toml(&std::fs::read_to_string(path)?)
}
