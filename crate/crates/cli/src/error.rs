use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("missing artifact {}: run `npae {producer}` first", path.display())]
    MissingArtifact { path: PathBuf, producer: &'static str },
    #[error("{0}")]
    EmptyResults(String),
    #[error(transparent)]
    Core(#[from] npae_core::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::MissingArtifact { .. } | CliError::EmptyResults(_) => 3,
            CliError::Core(npae_core::Error::TrainingDiverged { .. } | npae_core::Error::Numeric(_)) => 4,
            CliError::Core(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "bad-config",
            CliError::MissingArtifact { .. } | CliError::EmptyResults(_) => "missing-artifact",
            CliError::Core(npae_core::Error::TrainingDiverged { .. } | npae_core::Error::Numeric(_)) => "numeric",
            CliError::Core(_) => "other",
        }
    }

    /// `npae: error code=N kind=K: message`, always a single line.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("npae: error code={} kind={}: {msg}", self.exit_code(), self.kind())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}
