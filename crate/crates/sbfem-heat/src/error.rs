use thiserror::Error;

/// Unified error type for the whole crate.
///
/// `exit_code` partitions errors into the CLI contract: 2 for usage and
/// input problems, 1 for numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{axis} ({length}) not divisible by target edge length {h}")]
    NonDivisible {
        axis: &'static str,
        length: f64,
        h: f64,
    },

    #[error("empty or inverted domain rectangle")]
    EmptyDomain,

    #[error("cell {cell_id} not star-convex from centroid")]
    NotStarConvex { cell_id: usize },

    #[error("degenerate (coincident) seeds after relaxation: {indices:?}")]
    DegenerateSeeds { indices: Vec<usize> },

    #[error("mesh validation failed:\n{report}")]
    InvalidMesh { report: String },

    #[error("cell {cell_id}: degenerate boundary edge ({detail})")]
    DegenerateEdge { cell_id: usize, detail: String },

    #[error("cell {cell_id}: {what} ill-conditioned (estimate {cond:.3e})")]
    IllConditioned {
        cell_id: usize,
        what: &'static str,
        cond: f64,
    },

    #[error("cell {cell_id}: eigen-decomposition failed ({detail})")]
    EigenFailure { cell_id: usize, detail: String },

    #[error("singular system: {detail}")]
    Singular { detail: String },

    #[error("linear solve failed ({step}): residual {residual:.3e}")]
    SolveFailure { step: String, residual: f64 },

    #[error("verification failed: {message}")]
    Verification { message: String },

    #[error("{path}:{line}:{col}: {message}")]
    Parse {
        path: String,
        line: usize,
        col: usize,
        message: String,
    },

    #[error("expression error at byte {pos}: {message}")]
    Expr { pos: usize, message: String },

    #[error("configuration error: {message}")]
    Config { message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// CLI exit code: 0 is success, 1 numerical failure, 2 usage/input error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotStarConvex { .. }
            | Error::DegenerateEdge { .. }
            | Error::IllConditioned { .. }
            | Error::EigenFailure { .. }
            | Error::Singular { .. }
            | Error::SolveFailure { .. }
            | Error::Verification { .. } => 1,
            _ => 2,
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Error::Config {
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
