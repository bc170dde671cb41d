use thiserror::Error;

/// Errors raised by the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's contract (bad lengths, mismatched grids, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// Unknown sampling family or parameters that yield non-finite samples.
    #[error("invalid family: {0}")]
    Family(String),

    /// A marching scheme produced a non-finite value.
    #[error("numerical instability in {stage} at ({i}, {j})")]
    Instability {
        stage: &'static str,
        i: usize,
        j: usize,
    },

    /// A linear solve was singular or too badly conditioned to trust.
    #[error(
        "ill-conditioned system in {stage} at index {index} (condition estimate {condition:.3e})"
    )]
    IllConditioned {
        stage: &'static str,
        index: usize,
        condition: f64,
    },

    /// Assembled operator data violated a structural property.
    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
