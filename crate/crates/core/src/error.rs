use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vertex index {index} out of range for graph with {n} vertices")]
    VertexOutOfRange { index: usize, n: usize },
    #[error("duplicate edge ({u}, {v})")]
    DuplicateEdge { u: usize, v: usize },
    #[error("explicit self-loop at vertex {0}; self-loops of weight 0 are implicit")]
    SelfLoop(usize),
    #[error("invalid weight {weight}: {reason}")]
    InvalidWeight { weight: f64, reason: &'static str },
    #[error("invalid label {label} at vertex {vertex}: labels must be non-negative")]
    InvalidLabel { vertex: usize, label: f64 },
    #[error("attribute length mismatch: expected {expected}, got {got}")]
    AttributeMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("beta = {beta} violates the bound beta >= {bound}")]
    BetaBound { beta: f64, bound: f64 },
    #[error("graph generation failed: {0}")]
    Generation(String),
    #[error("vertex {0} has zero weighted degree")]
    ZeroDegree(usize),
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("root node is not a scalar (shape {0:?})")]
    NonScalarRoot(Vec<usize>),
    #[error("empty sample set")]
    EmptySamples,
    #[error("numeric overflow: {0}")]
    Overflow(String),
    #[error("walk enumeration would produce more than {cap} walks")]
    WalkLimit { cap: usize },
    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
