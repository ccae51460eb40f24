use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("empty sequence: {0}")]
    EmptySequence(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("corrupt data: {0}")]
    Corrupt(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("alignment errors:\n{}", .0.join("\n"))]
    Alignment(Vec<String>),
    #[error("record {id} has length {len}, exceeding token budget {budget}")]
    OverLength { id: String, len: usize, budget: usize },
    #[error("non-finite gradient for {param} at index {index}")]
    NonFiniteGradient { param: String, index: usize },
    #[error("non-finite loss in batch [{}]", .0.join(", "))]
    NonFiniteLoss(Vec<String>),
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("{path}: {source}")]
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
}
