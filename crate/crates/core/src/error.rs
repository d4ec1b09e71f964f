use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An element modulus fell below the stiffness floor, so the assembled
    /// matrix could become singular.
    #[error("element {element} modulus {modulus:e} is below the floor {floor:e}")]
    ModulusBelowFloor {
        element: usize,
        modulus: f64,
        floor: f64,
    },

    #[error("zero diagonal entry at row {0}; Gauss-Seidel cannot proceed")]
    SingularSmoother(usize),

    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    /// The reduced reanalysis system could not be factorized; the caller
    /// should refactorize the coarse operator.
    #[error("reanalysis reduced system is singular ({0} modified DOFs)")]
    ReanalysisBreakdown(usize),

    #[error("solver did not converge after {cycles} V-cycles (last change {last_change:e})")]
    NotConverged { cycles: usize, last_change: f64 },

    #[error("failed to parse {what}: {detail}")]
    Parse { what: String, detail: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
