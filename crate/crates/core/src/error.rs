use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: String,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: {msg}")]
    InvalidArgument { op: String, msg: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("domain mismatch: {0}")]
    Domain(String),

    #[error("graph: {0}")]
    Graph(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("framing mismatch: expected {expected}, got {got}")]
    Framing { expected: String, got: String },

    #[error("training diverged at epoch {epoch}: {msg}")]
    Diverged { epoch: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(op: &str, msg: impl Into<String>) -> Error {
    Error::InvalidArgument {
        op: op.to_string(),
        msg: msg.into(),
    }
}

pub(crate) fn shape_err(op: &str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op: op.to_string(),
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}
