use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters (grid steps, model shapes, training settings).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data.
    #[error("input error: {0}")]
    Input(String),

    /// A required external tool is missing or unusable.
    #[error("environment error: {0}")]
    Environment(String),

    /// An external encoder ran but failed.
    #[error("encode failed: {message}")]
    Encode { message: String, log: String },

    /// Training diverged.
    #[error("training diverged at iteration {iteration}: {detail}")]
    Diverged { iteration: usize, detail: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    /// A size table could not be completed.
    #[error("size table aborted after {completed} of {total} orientations (failed at {failed_at}): {source}")]
    SizeTableAborted {
        completed: usize,
        total: usize,
        failed_at: crate::geometry::Orientation,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// The innermost error, looking through table-abort wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::SizeTableAborted { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
