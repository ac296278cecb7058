use std::path::PathBuf;

use nalgebra::Vector3;

/// Errors produced anywhere in the shot pipeline.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("out of bounds: {0}")]
    OutOfBounds(String),

    /// Malformed input file. `record` is the zero-based record (or line) number.
    #[error("parse error at record {record}: {message}")]
    Parse { record: usize, message: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("Newton iterations did not converge after {iterations} steps (gradient norm {grad_norm:e})")]
    Convergence { iterations: usize, grad_norm: f64 },

    #[error("only {found} of {requested} feasible candidates after the attempt budget")]
    InfeasibleRegion { found: usize, requested: usize },

    #[error("oracle error: {0}")]
    Oracle(String),

    #[error("oracle timed out waiting for a verdict")]
    Timeout,

    #[error("session closed")]
    Cancelled,

    #[error("chooser failed on description {k}: {message}")]
    Chooser { k: usize, message: String },

    #[error("leg {leg} is unreachable")]
    Unreachable { leg: usize },

    #[error("invalid endpoint: {0}")]
    InvalidEndpoint(String),

    #[error("corridor segment {segment} violates the safety margin")]
    CorridorInfeasible { segment: usize },

    #[error("trajectory infeasible at t = {t:.4} s, p = [{:.3}, {:.3}, {:.3}]: {reason}", position.x, position.y, position.z)]
    TrajectoryInfeasible {
        t: f64,
        position: Vector3<f64>,
        reason: String,
    },

    #[error("spline needs at least 2 knots, got {0}")]
    DegenerateSpline(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
