//! Configuration-driven pipeline around `nearmiss-core`: ingest segments,
//! compute TTC, extract blocks, fit, compare, report risk and validate.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_all, cmd_blocks, cmd_compare, cmd_fit, cmd_ingest, cmd_risk, cmd_synth, cmd_ttc, cmd_validate};
pub use config::{LoadedConfig, PipelineConfig};
pub use error::CliError;
