use std::path::{Path, PathBuf};

/// A malformed document, independent of where it came from.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    /// A record that parsed as JSON but is not a valid row, e.g. `points[2]`.
    #[error("{field}: {message}")]
    Record { field: String, message: String },
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

impl FormatError {
    pub(crate) fn record(field: impl Into<String>, message: impl Into<String>) -> Self {
        FormatError::Record {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Format { path: PathBuf, source: FormatError },
    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] linestitch_core::Error),
}

impl Error {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path, source: FormatError) -> Self {
        Error::Format {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 for bad input, 3 for numerical failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Core(e) if !e.is_input_error() => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
