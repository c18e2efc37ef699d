use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("no job converged ({0} jobs)")]
    NoConvergence(usize),

    #[error(transparent)]
    Core(#[from] t2star_core::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit status: 2 configuration, 3 non-convergence, 4 io.
    pub fn exit_code(&self) -> i32 {
        use t2star_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::NoConvergence(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Core(E::Io { .. } | E::Format(_)) => 4,
            CliError::Core(_) => 2,
        }
    }
}
