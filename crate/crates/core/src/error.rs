use std::path::PathBuf;

use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric within {tol:e} (max asymmetry {asymmetry:e})")]
    NotSymmetric { tol: f64, asymmetry: f64 },

    #[error("linearly dependent columns: {0}")]
    RankDeficient(String),

    #[error("column {column} is not unit-norm (norm {norm})")]
    NotNormalized { column: usize, norm: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point is infeasible: {nnz} nonzeros exceeds sparsity level {s}")]
    InfeasiblePoint { nnz: usize, s: usize },

    #[error("true parameter alpha0 is required for this operation")]
    MissingAlpha,

    #[error("sparse representation r(x) is required for the signal-space bound")]
    MissingRepresentation,

    #[error("exhaustive search over {count} supports exceeds the enumeration cap of {cap}; use a smaller instance")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("solver did not reach the certificate tolerance after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        best: DVector<f64>,
    },

    #[error("linear program failure: {0}")]
    LinearProgram(String),

    #[error("unknown estimator '{0}' (valid: oracle, ls, ml, bpdn, ds, gds, gauss-bpdn)")]
    UnknownEstimator(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
