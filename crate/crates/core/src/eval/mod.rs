//! Replay, synthetic data, metrics and plot data.

mod metrics;
mod plot;
mod replay;
mod synth;

pub use metrics::{
    align_rigid, associate, convention, evaluate, Alignment, MetricsReport, ASSOCIATION_TOLERANCE, DEFAULT_RPE_DELTA,
};
pub use plot::emit_plot_data;
pub use replay::{replay, ReplayOutput};
pub use synth::{generate_synthetic, Gait, SyntheticConfig, SyntheticLog, TruthState};
