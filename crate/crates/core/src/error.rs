use std::path::PathBuf;

use thiserror::Error;

use crate::mask::Label;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid level specification: {0}")]
    InvalidLevel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty G_c: no grid node satisfies the level condition above threshold {threshold}")]
    EmptyDomain { threshold: f64 },

    #[error("empty G_(c+2eps): no node has level above {threshold} (epsilon = {epsilon})")]
    EmptyInner { threshold: f64, epsilon: f64 },

    #[error("empty Cauchy boundary: no node on the Cauchy face lies above the threshold")]
    EmptyCauchyBoundary,

    #[error("masked domain touches the time boundary t = {time} at node {node}")]
    TimeBoundary { node: usize, time: f64 },

    #[error("nonpositive level base {base} at node coordinates {point:?}")]
    NonpositiveBase { base: f64, point: Vec<f64> },

    #[error("weight exponent overflow: lambda = {lambda}, max level = {max_level}, exponent = {exponent}")]
    WeightOverflow {
        lambda: f64,
        max_level: f64,
        exponent: f64,
    },

    #[error("stencil of residual node {node} reaches node {neighbor} labelled {label:?}")]
    StencilGeometry {
        node: usize,
        neighbor: usize,
        label: Label,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("Cauchy constraint violated: max deviation {max_violation:e}")]
    ConstraintViolation { max_violation: f64 },

    #[error("operator check failed: {0}")]
    OperatorCheck(String),

    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("Gram operator is not positive definite (curvature {curvature:e})")]
    IndefiniteGram { curvature: f64 },

    #[error("line search failed at iteration {iteration} after {halvings} step reductions")]
    LineSearchFailed { iteration: usize, halvings: usize },

    #[error(
        "gradient iteration diverged at iteration {iteration}: J rose from {previous} to {current}"
    )]
    Divergence {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("iterate left B(R) at iteration {iteration}: norm {norm} >= R = {radius}")]
    RadiusExit {
        iteration: usize,
        norm: f64,
        radius: f64,
    },

    #[error("not enough tail iterates for a contraction fit ({found} < {required})")]
    ShortTail { found: usize, required: usize },

    #[error("unknown {kind} id `{id}` (known: {known})")]
    UnknownId {
        kind: &'static str,
        id: String,
        known: String,
    },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("config error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidGrid(_)
            | Error::InvalidLevel(_)
            | Error::InvalidArgument(_)
            | Error::EmptyDomain { .. }
            | Error::EmptyInner { .. }
            | Error::EmptyCauchyBoundary
            | Error::TimeBoundary { .. }
            | Error::OperatorCheck(_)
            | Error::UnknownId { .. }
            | Error::Parse(_)
            | Error::Schema { .. }
            | Error::GridMismatch
            | Error::ConstraintViolation { .. } => ErrorClass::Config,
            Error::Io { .. } => ErrorClass::Io,
            _ => ErrorClass::Numerical,
        }
    }

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
