use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in `{op}`: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("domain error in `{op}`: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("non-finite value produced by `{op}`")]
    NonFinite { op: &'static str },

    #[error("backward: {0}")]
    Backward(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("checkpoint format: {0}")]
    Format(String),

    #[error("missing checkpoint entry `{0}`")]
    MissingEntry(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{}mask covers every pixel", frame_prefix(.frame))]
    EmptyRegion { frame: Option<usize> },

    #[error("optimization diverged: {0}")]
    Diverged(String),

    #[error("unknown edit direction `{name}` (available: {available})")]
    UnknownDirection { name: String, available: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn frame_prefix(frame: &Option<usize>) -> String {
    frame.map(|t| format!("frame {t}: ")).unwrap_or_default()
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Domain { .. } => "domain",
            Error::NonFinite { .. } => "non_finite",
            Error::Backward(_) => "backward",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Format(_) => "format",
            Error::MissingEntry(_) => "missing_entry",
            Error::Config(_) => "config",
            Error::EmptyRegion { .. } => "empty_region",
            Error::Diverged(_) => "diverged",
            Error::UnknownDirection { .. } => "unknown_direction",
            Error::Io { .. } => "io",
        }
    }
}
