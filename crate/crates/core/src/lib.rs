//! Proprioceptive odometry for legged robots.
//!
//! Four estimators share one IMU and contact model:
//!
//! * [`estimators::InvariantFilter`] in EKF mode: a left-invariant EKF on
//!   SE_{k+2}(3) (attitude, position, velocity and one foothold slot per foot),
//!   with an IMU-rate left-linear prediction and event-scheduled contact updates.
//! * The same filter in graph-update mode: the measurement step is replaced by a
//!   small Levenberg-Marquardt solve over a prior factor and the contact factors.
//! * [`estimators::FixedLagSmoother`] with one persistent IMU bias: contact-event
//!   navigation states tied by preintegrated IMU factors, and one navigation-frame
//!   landmark per contact episode.
//! * The same smoother with a per-event bias chained by a random walk.
//!
//! Supporting layers: [`liegroup`] (SO(3) kernels and SE_K(3)), [`imu`]
//! (prediction factors and preintegration), [`estimation`] (Kalman update,
//! marginalization, a manifold LM solver), [`factors`], [`io`] (JSONL logs,
//! TUM trajectories, config) and [`eval`] (APE/RPE metrics, synthetic gaits,
//! replay).

pub mod error;
pub mod estimation;
pub mod estimators;
pub mod eval;
pub mod factors;
pub mod imu;
pub mod io;
pub mod liegroup;

pub use error::{Error, Result};
