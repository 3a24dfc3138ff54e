//! Stage orchestration for the `ecpe` command.

pub mod config;
pub mod stages;
pub mod workspace;

pub use config::{load_config, parse_config, LoadedConfig, PipelineConfig};
pub use stages::{exit_code, Pipeline, Provenance, RunOptions, ScoreReport, Stage, StageOutcome, VERSION};
