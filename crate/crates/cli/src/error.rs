use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage `{stage}` needs the output of `{needs}`; run `graphscore {needs}` first")]
    MissingStage { stage: &'static str, needs: &'static str },

    #[error(
        "output of `{upstream}` is stale: its manifest records config hash {recorded} but the current \
         config hashes to {expected}; rerun `graphscore {upstream}` or pass --force"
    )]
    Stale {
        upstream: &'static str,
        recorded: String,
        expected: String,
    },

    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] graphscore::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for configuration problems, 3 for everything that fails while a
    /// stage runs.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Core(graphscore::Error::Config(_)) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
