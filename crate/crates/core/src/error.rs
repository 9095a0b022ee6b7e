use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(
        "matrix is not positive definite: lambda_min={lambda_min:e}, lambda_max={lambda_max:e}"
    )]
    NotSpd { lambda_min: f64, lambda_max: f64 },
    #[error("matrix is not positive semi-definite: lambda_min={lambda_min:e}")]
    NotPsd { lambda_min: f64 },
    #[error("gain matrix is singular: singular values in [{s_min:e}, {s_max:e}]")]
    SingularBeta { s_min: f64, s_max: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("quadrature did not converge: estimated error {estimate:e}")]
    Quadrature { estimate: f64 },
    #[error("positive definiteness lost at Sinkhorn step {step}: {source}")]
    StepFailure {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("grid too narrow: truncated Gaussian mass {mass:e}")]
    GridTooNarrow { mass: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
