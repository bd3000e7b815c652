use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("missing artifact {path} (produced by `segdyn {stage}`)")]
    MissingArtifact { path: PathBuf, stage: &'static str },

    #[error("artifact check failed:\n  {}", .0.join("\n  "))]
    Check(Vec<String>),

    #[error(transparent)]
    Core(#[from] segdyn::Error),
}

impl CliError {
    /// 1 validation, 2 runtime or numerics, 3 missing dependency artifact.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Check(_) => 1,
            CliError::MissingArtifact { .. } => 3,
            CliError::Core(e) => match e {
                segdyn::Error::InvalidParameter(_)
                | segdyn::Error::DimensionMismatch { .. }
                | segdyn::Error::DimensionExplosion { .. }
                | segdyn::Error::InvalidArtifact { .. }
                | segdyn::Error::Json { .. } => 1,
                _ => 2,
            },
        }
    }
}
