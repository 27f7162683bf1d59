use thiserror::Error;

/// Errors raised by the library. Harness commands map these onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on the problem domain was violated (bad point, empty list, out-of-range radius).
    #[error("domain error: {0}")]
    Domain(String),

    /// Tape misuse: dangling node reference, operand of the wrong kind or shape.
    #[error("structural error: {0}")]
    Structural(String),

    /// A non-finite value appeared during evaluation or differentiation.
    #[error("numerical overflow at {location}: {detail}")]
    NumericalOverflow { location: String, detail: String },

    /// Training aborted because a loss or gradient became non-finite.
    #[error("training aborted at iteration {iteration}: {reason}")]
    TrainingAborted { iteration: usize, reason: String },

    /// A linear solve or iterative method failed.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Residual evaluation requested in an incompatible head mode.
    #[error("mode error: {0}")]
    Mode(String),

    /// Reference denominator vanished.
    #[error("degenerate reference: {0}")]
    DegenerateReference(String),

    /// Smoothing bandwidth below grid resolution.
    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error in {path}: {detail}")]
    Format { path: String, detail: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn format(path: impl AsRef<std::path::Path>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.as_ref().display().to_string(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
