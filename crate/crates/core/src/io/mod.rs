//! Log ingestion, sensor extrinsics, trajectory files and configuration.

mod config;
mod extrinsics;
mod log;
mod trajectory;

pub use config::{load_replay_config, Extrinsics, ReplayConfig};
pub use extrinsics::{apply_extrinsics, Extrinsic};
pub use log::{parse_log, parse_log_reader, write_log, GroundTruthPose, LogRecord};
pub use trajectory::{format_g, read_trajectory, write_trajectory, Pose};
