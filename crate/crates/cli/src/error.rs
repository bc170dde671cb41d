use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{stage} failed: {source}")]
    Numerical {
        stage: &'static str,
        #[source]
        source: memwave_core::Error,
    },

    /// Names of the checks that failed.
    #[error("verification failed: {}", .0.join(", "))]
    Verify(Vec<String>),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {msg}", .path.display())]
    Data { path: PathBuf, msg: String },
}

impl CliError {
    /// Process exit code: 2 for bad configuration or input files, 3 for
    /// numerical failures, 4 for failed verification, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Data { .. } => 2,
            CliError::Numerical { source, .. } => match source {
                memwave_core::Error::Usage(_)
                | memwave_core::Error::Family(_)
                | memwave_core::Error::Parse(_) => 2,
                _ => 3,
            },
            CliError::Verify(_) => 4,
            CliError::Io { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Tags a core error with the pipeline stage it came from.
pub(crate) fn stage<T>(name: &'static str, r: memwave_core::Result<T>) -> Result<T> {
    r.map_err(|source| CliError::Numerical {
        stage: name,
        source,
    })
}

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
    let path = path.into();
    move |source| CliError::Io { path, source }
}
