use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("solver diverged: {0}")]
    Diverged(String),

    #[error(transparent)]
    Core(#[from] dyntomo::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    /// 2 for bad input, 3 for files, 4 for a diverged solver.
    pub fn exit_code(&self) -> i32 {
        use dyntomo::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Diverged(_) => 4,
            CliError::Core(E::Io { .. } | E::Container { .. }) => 3,
            CliError::Core(_) => 2,
        }
    }
}
