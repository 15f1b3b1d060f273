use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("spatial dims must be powers of two, got {0}x{1}")]
    NotPowerOfTwo(usize, usize),

    #[error("mode bound violated: {modes} modes on a {height}x{width} grid (need 2m <= H and m <= W/2)")]
    ModeBound {
        modes: usize,
        height: usize,
        width: usize,
    },

    #[error("relative L2 undefined: target has zero norm")]
    ZeroNormTarget,

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("permeability must be positive everywhere (found {value} at node {index})")]
    NonPositiveCoefficient { value: f64, index: usize },

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("solver failed on sample {index}: {source}")]
    SampleSolve {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("training diverged in stage {stage}, epoch {epoch}: loss = {loss}")]
    Divergence { stage: usize, epoch: usize, loss: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint fingerprint mismatch: checkpoint {checkpoint:016x}, config {config:016x}")]
    Fingerprint { checkpoint: u64, config: u64 },

    #[error("malformed tensor file {path}: {reason}")]
    TensorFormat { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Fingerprint { .. }
            | Error::TensorFormat { .. }
            | Error::Io { .. } => 2,
            Error::SolverDiverged { .. }
            | Error::SampleSolve { .. }
            | Error::NonPositiveCoefficient { .. } => 3,
            Error::Divergence { .. } | Error::NonFiniteGradient(_) => 4,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
