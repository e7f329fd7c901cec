//! Crate-wide error type and exit-code mapping for the CLI.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid mesh: {0}")]
    Mesh(String),

    #[error("scene error: {0}")]
    Scene(String),

    /// No feasible approach, grasp, or reach exists for the request.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The optimizer hit a non-finite loss or gradient and stopped.
    #[error("optimization aborted at iteration {iteration} in term `{term}`: {reason}")]
    OptimAbort {
        iteration: usize,
        term: String,
        reason: String,
    },
}

impl Error {
    /// Process exit code for this error class: 2 infeasible scene/request,
    /// 3 optimizer abort, 4 I/O or config failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) | Error::Scene(_) => 2,
            Error::OptimAbort { .. } => 3,
            Error::Io(_) | Error::Parse(_) | Error::Json(_) | Error::Config(_)
            | Error::Mesh(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
