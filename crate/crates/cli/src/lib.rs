//! Configuration, presets, pipeline execution and verification suites
//! behind the `enclosure` binary.

pub mod config;
pub mod presets;
pub mod run;
pub mod verify;

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("{stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: enclosure_core::Error,
    },
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 2 = validation, 3 = solver or output failure, 4 = failed checks.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Stage { .. } | CliError::Io { .. } => 3,
            CliError::Verification(_) => 4,
        }
    }

    pub(crate) fn stage(stage: &'static str) -> impl FnOnce(enclosure_core::Error) -> CliError {
        move |source| CliError::Stage { stage, source }
    }
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

pub(crate) fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}
