//! Std side of trackscope: file formats, configuration, the synthetic
//! corpus generator, the end-to-end pipeline and report output.

pub mod config;
pub mod error;
pub mod formats;
pub mod generate;
pub mod inspect;
pub mod pipeline;
pub mod report;
pub mod simulate;

pub use config::PipelineConfig;
pub use error::{CliError, Result};
pub use generate::{generate, GroundTruth, SyntheticCorpusSpec};
pub use pipeline::{cmd_run, run_events, Manifest, RunOutcome};
