//! Measurement and motion factors, in the filter chart and as graph factors.

mod contact;
mod height;
mod imu;
mod prior;

pub use contact::{contact_residual_filter, FilterContactFactor, LandmarkContactFactor};
pub use height::{height_row_filter, FilterHeightFactor, LandmarkHeightFactor};
pub use imu::{imu_residual, CombinedImuFactor, ImuFactor};
pub use prior::PriorFactor;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub type FootId = u32;

/// Body-frame base-to-foot vector of one stance foot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactMeasurement {
    pub foot: FootId,
    pub point: Vector3<f64>,
    pub touchdown: bool,
}

/// One contact episode of one foot: the interval from a touchdown to the
/// following liftoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EpisodeKey {
    pub foot: FootId,
    pub episode: u32,
}

impl EpisodeKey {
    pub fn new(foot: FootId, episode: u32) -> Self {
        Self { foot, episode }
    }
}
