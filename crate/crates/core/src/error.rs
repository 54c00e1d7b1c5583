use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: every row needs at least one attendable entry (row {row} is fully masked)")]
    DegenerateRow { op: &'static str, row: usize },

    #[error("cross entropy: every position is ignored")]
    EmptyLoss,

    #[error("{op}: expected a rank-{expected} tensor, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },

    #[error("non-finite value encountered: {0}")]
    NumericInstability(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("source sequence is empty")]
    EmptySource,

    #[error("sequence of length {len} exceeds max_len {max}")]
    Length { len: usize, max: usize },

    #[error("token id {id} out of range for vocabulary of size {vocab}")]
    TokenRange { id: usize, vocab: usize },

    #[error("corrupt checkpoint (tensor `{tensor}`): {reason}")]
    Corruption { tensor: String, reason: String },

    #[error("parallel files are misaligned: {src_lines} source lines vs {tgt_lines} target lines")]
    Alignment { src_lines: usize, tgt_lines: usize },

    #[error("malformed input at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("training diverged at step {step} (loss {loss})")]
    Divergence { step: usize, loss: f64 },

    #[error("memory budget of {budget} bytes is too small; a minimal batch needs {needed} bytes")]
    BudgetTooSmall { budget: usize, needed: usize },

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
