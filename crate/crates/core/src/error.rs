use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("decode error at byte {offset}: {cause}")]
    Decode { offset: usize, cause: String },

    #[error("unsupported image format")]
    UnsupportedFormat,

    #[error("box ({x},{y},{w},{h}) exceeds image bounds {width}x{height}")]
    Bounds {
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        width: usize,
        height: usize,
    },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("seed box covers the entire image, no background pixels to model")]
    NoBackground,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("model was trained under encoding fingerprint {expected}, active config has {found}")]
    ConfigMismatch { expected: String, found: String },

    #[error("manifest line {line}: {msg}")]
    Ingest { line: usize, msg: String },

    #[error("stale cache for stage `{stage}` in {dir}: config or inputs changed since it was built, re-run the stage with --force")]
    StaleCache { stage: String, dir: PathBuf },

    #[error("stage `{stage}` requires `{missing}` to run first")]
    MissingPrerequisite { stage: String, missing: String },

    #[error("missing cached artifact for {image}: {path}")]
    MissingArtifact { image: String, path: PathBuf },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable tag used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Decode { .. } => "decode",
            Error::UnsupportedFormat => "unsupported-format",
            Error::Bounds { .. } => "bounds",
            Error::Argument(_) => "argument",
            Error::NoBackground => "no-background",
            Error::Config(_) => "config",
            Error::Format(_) => "format",
            Error::ConfigMismatch { .. } => "config-mismatch",
            Error::Ingest { .. } => "ingest",
            Error::StaleCache { .. } => "stale-cache",
            Error::MissingPrerequisite { .. } => "missing-prerequisite",
            Error::MissingArtifact { .. } => "missing-artifact",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
