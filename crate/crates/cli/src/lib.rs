//! Batch driver for the `volchange` library: pipeline configuration,
//! versioned JSON reports, synthetic scenes and the `volchange` command.

pub mod cli;
pub mod config;
pub mod pipeline;
pub mod report;
pub mod scene;

pub use config::{parse_config, PipelineConfig};
pub use pipeline::{run_pipeline, RunSummary, Stage, StageError};
