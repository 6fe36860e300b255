//! Command layer of the `randrb` binary: experiment configuration, the offline `build` and online
//! `estimate` pipelines, and the sample-count and failure-probability tables.

pub mod commands;
pub mod config;
pub mod pipeline;

pub use commands::{
    cmd_build, cmd_estimate, cmd_fig21, cmd_sweep_histogram, cmd_table22, fig21, table22, EstimateOptions,
    EstimateSummary, RunManifest,
};
pub use config::{Benchmark, DualConfig, DualMethod, ExperimentConfig, Seeds, SketchPlan};
