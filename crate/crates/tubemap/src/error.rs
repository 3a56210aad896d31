use thiserror::Error;

/// Errors produced by mesh loading, validation, and the parameterization
/// pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("face {face} is degenerate (area {area:.3e})")]
    DegenerateFace { face: usize, area: f64 },

    #[error("expected {expected} boundary loop(s), found {found}")]
    BoundaryLoopCount { expected: usize, found: usize },

    #[error("boundary loops are not connected through the interior")]
    Disconnected,

    #[error("invalid seam: {0}")]
    InvalidSeam(String),

    #[error("cut did not produce a disk: {0}")]
    DegenerateCut(String),

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("contradictory constraints: {0}")]
    Constraint(String),

    #[error("Beltrami coefficient on face {face} has modulus {modulus:.6} (must be < 1)")]
    NonAdmissibleMu { face: usize, modulus: f64 },

    #[error("values disagree across the seam at vertex {vertex} (difference {delta:.3e})")]
    GlueMismatch { vertex: usize, delta: f64 },

    #[error("bend radius {r} is not admissible: {msg}")]
    InadmissibleRadius { r: f64, msg: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
