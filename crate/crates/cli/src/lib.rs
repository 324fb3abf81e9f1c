//! Staged driver for the graphscore study: configuration loading,
//! per-stage artifacts and manifests.

pub mod config;
pub mod error;
pub mod stages;

pub use config::{Overrides, RunConfig};
pub use error::{CliError, Result};
pub use stages::{Manifest, Runner, Stage, StageStatus};
