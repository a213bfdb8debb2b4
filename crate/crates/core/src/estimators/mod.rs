//! Estimator variants sharing one contact schedule.
//!
//! A contact packet triggers a scheduled update when it carries a touchdown or
//! when at least `max_update_interval` has passed since the previous scheduled
//! update; the timer restarts on every scheduled update. Between scheduled
//! updates the estimators only integrate the IMU.

mod config;
mod filter;
mod smoother;

pub use config::{EstimatorConfig, InitialState, Variant};
pub use filter::InvariantFilter;
pub use smoother::FixedLagSmoother;

use std::collections::BTreeSet;

use nalgebra::{DMatrix, Vector3};

use crate::error::{Error, Result};
use crate::factors::{ContactMeasurement, FootId};
use crate::imu::ImuSample;
use crate::liegroup::Rot3;

/// Slack on the periodic update interval for timestamps read from text.
const SCHEDULE_TOLERANCE: f64 = 1e-9;

/// Stance set at one instant. Feet absent from `feet` are in swing.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactPacket {
    pub t: f64,
    pub feet: Vec<ContactMeasurement>,
}

impl ContactPacket {
    pub fn new(t: f64, feet: Vec<ContactMeasurement>) -> Self {
        Self { t, feet }
    }

    pub fn has_touchdown(&self) -> bool {
        self.feet.iter().any(|f| f.touchdown)
    }

    pub fn get(&self, foot: FootId) -> Option<&ContactMeasurement> {
        self.feet.iter().find(|f| f.foot == foot)
    }
}

/// Base pose and velocity at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub t: f64,
    pub rotation: Rot3,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Covariance over `[φ, p, v]` in the right-perturbation chart, when
    /// available at `t`.
    pub covariance: Option<DMatrix<f64>>,
}

pub trait Estimator {
    fn variant(&self) -> Variant;

    fn is_initialized(&self) -> bool;

    fn process_imu(&mut self, sample: &ImuSample) -> Result<()>;

    /// Returns whether a scheduled contact update was applied.
    fn process_contact(&mut self, packet: &ContactPacket) -> Result<bool>;

    /// Estimate at `t`, dead-reckoned through the held IMU sample. `t` must not
    /// precede the last processed timestamp.
    fn current_estimate(&self, t: f64) -> Result<Estimate>;

    /// Number of scheduled contact updates applied so far.
    fn update_count(&self) -> usize;
}

pub fn build_estimator(config: &EstimatorConfig, variant: Variant) -> Result<Box<dyn Estimator>> {
    Ok(match variant {
        Variant::Ekf | Variant::Iekf | Variant::DeadReckoning => {
            Box::new(InvariantFilter::new(config.clone(), variant)?)
        }
        Variant::FlSingle | Variant::FlCombined => Box::new(FixedLagSmoother::new(config.clone(), variant)?),
    })
}

/// Zero-order-hold IMU clock: the latest sample is held until the next sample
/// or contact packet arrives.
#[derive(Debug, Clone, Default)]
struct ImuClock {
    held: Option<ImuSample>,
    time: Option<f64>,
}

impl ImuClock {
    fn check(&self, t: f64, what: &str) -> Result<()> {
        if let Some(now) = self.time {
            if t < now {
                return Err(Error::OutOfOrder(format!("{what} at {t} precedes {now}")));
            }
        }
        Ok(())
    }

    fn check_sample(&self, sample: &ImuSample) -> Result<()> {
        self.check(sample.t, "IMU sample")?;
        if let Some(prev) = &self.held {
            if sample.t <= prev.t {
                return Err(Error::OutOfOrder(format!(
                    "IMU sample at {} does not follow {}",
                    sample.t, prev.t
                )));
            }
        }
        Ok(())
    }

    /// Held sample and hold duration up to `t`.
    fn span_to(&self, t: f64) -> Option<(ImuSample, f64)> {
        match (self.held, self.time) {
            (Some(s), Some(now)) if t > now => Some((s, t - now)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
struct Scheduler {
    interval: f64,
    last_update: Option<f64>,
    stance: BTreeSet<FootId>,
}

impl Scheduler {
    fn new(interval: f64) -> Self {
        Self {
            interval,
            last_update: None,
            stance: BTreeSet::new(),
        }
    }

    fn due(&self, packet: &ContactPacket) -> bool {
        packet.has_touchdown()
            || self
                .last_update
                .map_or(true, |last| packet.t - last >= self.interval - SCHEDULE_TOLERANCE)
    }

    /// Feet in stance at the previous scheduled update that are absent now.
    fn liftoffs(&self, packet: &ContactPacket) -> Vec<FootId> {
        self.stance
            .iter()
            .filter(|f| packet.get(**f).is_none())
            .copied()
            .collect()
    }

    fn commit(&mut self, packet: &ContactPacket) {
        self.last_update = Some(packet.t);
        self.stance = packet.feet.iter().map(|f| f.foot).collect();
    }
}

fn validate_packet(feet: &[FootId], packet: &ContactPacket) -> Result<()> {
    let mut seen = BTreeSet::new();
    for m in &packet.feet {
        if !feet.contains(&m.foot) {
            return Err(Error::UnknownFoot(m.foot));
        }
        if !seen.insert(m.foot) {
            return Err(Error::InvalidArgument(format!("foot {} listed twice at t={}", m.foot, packet.t)));
        }
        if !m.point.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite contact point for foot {}", m.foot)));
        }
    }
    Ok(())
}

fn full_contact(feet: &[FootId], packet: &ContactPacket) -> bool {
    feet.iter().all(|f| packet.get(*f).is_some())
}
