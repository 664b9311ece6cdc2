use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Layer `layer` consumes a tensor that does not match what `producer` emits.
    #[error("shape mismatch at {path}: layer {layer} expects {expected} but layer {producer} produces {found}")]
    LayerShape {
        layer: usize,
        producer: String,
        path: String,
        expected: String,
        found: String,
    },

    #[error("workload schema: {0}")]
    Schema(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("infeasible architecture: {0}")]
    Infeasible(String),

    #[error("unknown preset `{0}` (expected one of ddpm-toy, ldm-toy, sdm-toy)")]
    UnknownPreset(String),

    #[error("unmappable layer {layer}: {reason}")]
    Unmappable { layer: usize, reason: String },

    #[error("{0}")]
    Empty(String),

    /// Functional replay found a schedule that does not compute its workload.
    #[error("replay: {0}")]
    Replay(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
