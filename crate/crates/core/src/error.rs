use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid problem data: {0}")]
    InvalidProblem(String),

    #[error("unknown preset problem `{0}`")]
    UnknownPreset(String),

    #[error("invalid sparse matrix: {0}")]
    InvalidMatrix(String),

    #[error("singular matrix: pivot {pivot:e} in column {column}")]
    SingularMatrix { column: usize, pivot: f64 },

    #[error("matrix is not square ({nrows}x{ncols})")]
    NotSquare { nrows: usize, ncols: usize },

    #[error("krylov breakdown: {0}")]
    Breakdown(String),

    #[error("preconditioner is not positive definite (v'Pv = {0:e})")]
    IndefinitePreconditioner(f64),

    #[error("inner-product matrix is not positive definite (v'Hv = {0:e})")]
    IndefiniteMetric(f64),

    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("{0} requires a dense matrix of order {1}, above the limit {2}")]
    TooLarge(&'static str, usize, usize),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("matrix market: {0}")]
    MatrixMarket(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
