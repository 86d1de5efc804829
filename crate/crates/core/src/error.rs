use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Expected vs found shape for a named tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeMismatch {
    pub name: String,
    pub expected: Option<Vec<usize>>,
    pub found: Option<Vec<usize>>,
}

impl std::fmt::Display for ShapeMismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let show = |s: &Option<Vec<usize>>| match s {
            Some(s) => format!("{s:?}"),
            None => "missing".to_string(),
        };
        write!(f, "{}: expected {}, found {}", self.name, show(&self.expected), show(&self.found))
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error on axis `{axis}`: {msg}")]
    Dimension { axis: String, msg: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file {}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("manifest record {index}: {msg}")]
    Manifest { index: usize, msg: String },

    #[error("checkpoint does not match model config: {}", list_mismatches(.0))]
    CheckpointMismatch(Vec<ShapeMismatch>),

    #[error("training diverged at epoch {epoch}: {msg}")]
    Diverged { epoch: usize, msg: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn list_mismatches(m: &[ShapeMismatch]) -> String {
    m.iter().map(|m| m.to_string()).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub(crate) fn dim(axis: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Dimension { axis: axis.into(), msg: msg.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), msg: msg.into() }
    }
}
