use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("reverberation time is infinite: no surface absorbs energy")]
    InfiniteT60,

    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Parse failure in one of the text formats. `line` is 1-based.
    #[error("{}:{line}: {message}", path.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<input>".into()))]
    Format {
        path: Option<PathBuf>,
        line: usize,
        message: String,
    },

    #[error("request too long: {samples} samples exceeds cap of {cap}")]
    RequestTooLong { samples: usize, cap: usize },

    #[error("infeasible scenario profile: {0}")]
    Infeasible(String),

    #[error("no valid crop: {0}")]
    NoValidCrop(String),

    #[error("no estimate: {0}")]
    NoEstimate(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("audio: {0}")]
    Audio(#[from] hound::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: Option<&std::path::Path>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.map(|p| p.to_path_buf()),
            line,
            message: message.into(),
        }
    }
}
