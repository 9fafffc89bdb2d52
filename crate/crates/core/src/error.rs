use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("Gram matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("Gram matrix is not positive definite (leading minor {index} is {minor})")]
    NotPositiveDefinite { index: usize, minor: String },
    #[error("Gram matrix has {len} entries, expected {dim}x{dim}")]
    BadShape { dim: usize, len: usize },
    #[error("target Gram matrix is not positive semidefinite")]
    TargetNotPositive,
    #[error("target has dimension {target}, form has dimension {form}")]
    TargetTooLarge { target: usize, form: usize },
    #[error("enumeration budget of {budget} nodes exhausted")]
    BudgetExceeded { budget: u64 },
    #[error("integer overflow in {0}")]
    Overflow(&'static str),
    #[error("local density at p = {p} did not stabilize by k = {k_max} (last values {last:?})")]
    NotStabilized { p: u64, k_max: u32, last: [String; 2] },
    #[error("unsupported target norm {0}")]
    UnsupportedN(i64),
    #[error("dimension {0} is too small for this operation")]
    DimensionTooSmall(usize),
    #[error("scale r = {r} covers the whole sphere of norm {n}")]
    DegenerateScale { r: f64, n: i64 },
    #[error("quadrature did not reach the requested accuracy (estimate {estimate:e})")]
    QuadratureFailure { estimate: f64 },
    #[error("no integer points of norm {0}")]
    NoPoints(i64),
    #[error("empty solution set")]
    EmptySolutionSet,
    #[error("coefficient series is identically zero")]
    AllZeroSeries,
    #[error("parse error: {0}")]
    Parse(String),
    #[error("forms in the genus file disagree: {0}")]
    InconsistentGenus(String),
    #[error("genus file lists no forms")]
    EmptyGenus,
    #[error("form {0:?} not found")]
    UnknownForm(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
