use std::path::PathBuf;

/// Errors raised by the augmentation engine and its persistence layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A numeric argument outside the domain of the function it was passed to.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs whose shape or contents violate a documented invariant.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// A malformed SPGM feature file.
    #[error("{path}: format error at byte {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    /// A malformed or inconsistent batch manifest.
    #[error("{path}:{line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A configuration file that could not be parsed or failed validation.
    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Training produced a non-finite loss.
    #[error("simulation diverged at epoch {epoch}, batch {batch}: {message}")]
    Diverged {
        epoch: usize,
        batch: usize,
        message: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the filesystem rather than by bad input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
