use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, head counts, or experiment settings that cannot work together.
    #[error("configuration error: {0}")]
    Config(String),

    /// Bad input data (non-finite coordinates, values out of range, size mismatch).
    #[error("input error: {0}")]
    Input(String),

    /// A precondition of an operation was not met by the caller.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// `backward` was called twice on the same tape.
    #[error("tape already consumed by a previous backward pass")]
    TapeReused,

    /// Training produced a non-finite value.
    #[error("numerical failure at step {step}: {reason}")]
    Diverged { step: usize, reason: String },

    /// Malformed weight, mask, or config file.
    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported image: {0}")]
    UnsupportedImage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Diverged { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
