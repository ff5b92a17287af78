//! Configuration, checkpoints, artifact export and the stage pipeline.

mod checkpoint;
mod config;
mod export;
pub mod pipeline;
mod ppm;

pub use checkpoint::{params_digest, write_atomic, Checkpoint, BRANCH_PREFIX, FORMAT_VERSION, TRUNK_PREFIX};
pub use config::{EvalConfig, RunConfig};
pub use export::{auc_csv, curves_csv, distill_log_csv, nav_stats_csv, training_log_csv, validation_log_csv};
pub use ppm::{encode_ppm, frame_rgb, grayscale_rgb, overlay_rgb, write_ppm};
