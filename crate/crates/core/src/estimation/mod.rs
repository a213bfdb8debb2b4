//! Gaussian estimation machinery: Kalman updates, marginalization, a manifold
//! Levenberg-Marquardt solver over keyed variables and window marginalization.

mod belief;
mod factor;
pub mod linalg;
mod lm;
mod marginal;
mod noise;
mod values;

pub use belief::{ekf_update, marginalize_out, schur_complement, GaussianBelief, Manifold};
pub use factor::{numerical_jacobians, Factor, Linearization, SharedFactor};
pub use lm::{lm_optimize, lm_optimize_ordered, LmResult, LmSettings, Ordering};
pub use marginal::{marginalize_window, LinearPriorFactor, Marginalization};
pub use noise::{NoiseModel, DEFAULT_HUBER_THRESHOLD};
pub use values::{Key, Values, Variable};
