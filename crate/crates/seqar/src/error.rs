use thiserror::Error;

#[derive(Error, Debug)]
pub enum Error {
    #[error("invalid parameter vector: {0}")]
    InvalidParam(String),

    #[error("root finder failed to converge for coefficients {coeffs:?} (residual {residual:e})")]
    RootsNotConverged { coeffs: Vec<f64>, residual: f64 },

    #[error("unsupported boundary configuration: {0}")]
    UnsupportedBoundary(String),

    #[error("parameter vector is not stable: {0}")]
    NotStable(String),

    #[error("parameter vector is not on a supported boundary stratum: {0}")]
    NotBoundary(String),

    #[error("linear system is singular or ill-conditioned (cond estimate {cond:e})")]
    Unsolvable { cond: f64 },

    #[error("non-finite observation at index {index}")]
    OverflowDetected { index: usize },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("matrix is not symmetric positive semidefinite: {0}")]
    NotPsd(String),

    #[error("sequential estimate did not stop within the step cap")]
    NotStopped,

    #[error("missing mu constants for functional J{kind}: expected {expected}, got {got}")]
    MissingMu { kind: u8, expected: usize, got: usize },

    #[error("first-passage horizon cap exceeded ({0} time units); this indicates a bug")]
    HorizonExceeded(f64),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("too many non-stopping replications: {nonstops} of {total}")]
    TooManyNonStops { nonstops: usize, total: usize },

    #[error("conditions 1-3 do not hold for theta (use --force to override)")]
    ConditionsFail,

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv parse error at line {line}: {msg}")]
    CsvParse { line: usize, msg: String },

    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;
