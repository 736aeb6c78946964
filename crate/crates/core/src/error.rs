use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("non-finite value {value} at flat index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("empty reduction: axis has length 0")]
    EmptyReduction,

    #[error("backward: {0}")]
    Backward(String),

    /// A problem with one sample of a dataset, located by sample id and file.
    #[error("sample `{sample}` ({}): {msg}", path.display())]
    Sample {
        sample: String,
        path: PathBuf,
        msg: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {msg}", path.display())]
    Parse { path: PathBuf, msg: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config: {0}")]
    Config(String),

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error("training diverged at epoch {epoch}: non-finite loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, used by the command line front end.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::InvalidTensor(_) | Error::NonFinite { .. } => "tensor",
            Error::EmptyReduction => "reduction",
            Error::Backward(_) => "backward",
            Error::Sample { .. } => "sample",
            Error::Io { .. } => "io",
            Error::Parse { .. } | Error::Json(_) => "parse",
            Error::InvalidArgument(_) => "argument",
            Error::Config(_) => "config",
            Error::MissingArtifact(_) => "missing_artifact",
            Error::Diverged { .. } => "diverged",
        }
    }
}
