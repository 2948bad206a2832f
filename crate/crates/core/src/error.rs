use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("node {node} out of range (graph has {num_nodes} nodes)")]
    IndexOutOfRange { node: usize, num_nodes: usize },

    #[error("node {0} is isolated; the quantity is undefined")]
    IsolatedNode(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("degenerate bandwidth: pairwise distances have zero median")]
    DegenerateBandwidth,

    #[error("config error: {0}")]
    Config(String),

    /// Weight optimization produced a non-finite objective. Carries the
    /// objective values observed before the failure.
    #[error("non-finite dependence objective after {} steps", trace.len())]
    NonFiniteObjective { trace: Vec<f64> },

    /// Training loss went non-finite. Carries the per-epoch losses so far.
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged {
        epoch: usize,
        detail: String,
        history: Vec<f64>,
    },

    #[error("i/o error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
