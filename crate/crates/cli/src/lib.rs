//! Batch front-end: config loading, the design/verify/simulate pipeline and
//! its file outputs.

pub mod artifact;
pub mod config;
pub mod pipeline;

pub use config::RunConfig;
pub use pipeline::{compare_modes, run_pipeline, PipelineError};
