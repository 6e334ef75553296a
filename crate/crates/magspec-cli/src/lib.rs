//! Batch runner behind the `magspec` binary: configuration, per-stage
//! orchestration, eigen-data caching and report emission.

pub mod config;
pub mod manifest;
pub mod reports;
pub mod stages;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("stage {stage} failed: {source:#}")]
    Stage {
        stage: &'static str,
        #[source]
        source: anyhow::Error,
    },
    #[error("{failed} acceptance criteria failed")]
    AcceptanceFailed { failed: usize },
}

impl CliError {
    /// Process exit code: 2 for usage errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}
