use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid spin value {value} at site {site}; spins must be -1 or +1")]
    InvalidSpin { site: usize, value: i64 },

    #[error("invalid lattice shape {rows}x{cols}")]
    InvalidShape { rows: usize, cols: usize },

    #[error("site index {site} out of range for a lattice of {n} sites")]
    InvalidSite { site: usize, n: usize },

    #[error("non-finite parameter component {index}: {value}")]
    NonFiniteParameter { index: usize, value: f64 },

    #[error("lag {lag} exceeds the configured maximum {max}")]
    LagOverflow { lag: usize, max: usize },

    #[error("lattice of {sites} sites is too large for enumeration (max {max})")]
    TooLargeForEnumeration { sites: usize, max: usize },

    #[error("block of side {k} at ({row}, {col}) lies outside a {rows}x{cols} lattice")]
    BlockOutOfBounds { row: usize, col: usize, k: usize, rows: usize, cols: usize },

    #[error("block side {k} out of range 1..={max}")]
    BlockSideOutOfRange { k: usize, max: usize },

    #[error("weight vector has {got} entries for {expected} blocks")]
    WeightCountMismatch { expected: usize, got: usize },

    #[error("negative weight {value} for block {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("at least {min} draws are required, got {got}")]
    TooFewDraws { min: usize, got: usize },

    #[error("degenerate statistics: {0}")]
    Degenerate(String),

    #[error("matrix is singular: {0}")]
    Singular(String),

    #[error("matrix is not negative definite: {0}")]
    NotNegativeDefinite(String),

    #[error("non-positive weight {value} from option {option}")]
    NonPositiveWeight { option: u8, value: f64 },

    #[error("unknown weight option {0}; expected 1..=5")]
    UnknownWeightOption(u8),

    #[error("optimizer did not converge after {iterations} iterations (gradient norm {grad_norm:.3e}, threshold {threshold:.3e})")]
    NoConvergence { iterations: usize, grad_norm: f64, threshold: f64 },

    #[error("line search failed: {0}")]
    LineSearch(String),

    #[error("grid too narrow: boundary density ratio {ratio:.3e} on axis {axis}; suggested bounds [{lower}, {upper}]")]
    GridTooNarrow { axis: usize, ratio: f64, lower: f64, upper: f64 },

    #[error("grids differ: {0}")]
    GridMismatch(String),

    #[error("support violation: reference density positive where the approximation vanishes at grid index {0}")]
    SupportViolation(usize),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("effective sample size {ess:.1} below {min}")]
    LowEffectiveSampleSize { ess: f64, min: f64 },

    #[error("chain never accepted a proposal over {iterations} iterations")]
    ZeroAcceptance { iterations: usize },

    #[error("chain is degenerate: {0}")]
    DegenerateChain(String),

    #[error("empty record set")]
    EmptyRecords,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
