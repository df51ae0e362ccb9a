use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input contains a non-finite value at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },

    #[error("every column has zero variance; nothing left to cluster")]
    AllColumnsConstant,

    #[error("feature matrix must be column-standardized before building the Gram matrix")]
    NotStandardized,

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("label vectors differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },

    #[error("k = {k} is outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },

    #[error("cluster {0} has no members")]
    EmptyCluster(usize),

    #[error("covariance of component {0} is singular")]
    SingularCovariance(usize),

    #[error("separability needs at least two clusters")]
    SingleCluster,

    #[error("every candidate K produced a degenerate fit")]
    AllFitsDegenerate,

    #[error("invalid mixture specification: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("CSV line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
