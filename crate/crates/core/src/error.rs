use thiserror::Error;

pub type Result<T> = std::result::Result<T, SpcError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpcError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("trimming {trimmed} from each end of a sample of {n} leaves nothing")]
    TrimTooLarge { n: usize, trimmed: usize },

    #[error("zero variance")]
    ZeroVariance,

    #[error("non-positive value {0} where a positive value is required")]
    NonPositive(f64),

    #[error("non-finite value in input")]
    NonFinite,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{what} is not supported for dimension {dim}")]
    UnsupportedDimension { what: &'static str, dim: usize },

    #[error("heterogeneous subgroup sizes: expected {expected}, found {found}")]
    HeterogeneousSubgroups { expected: usize, found: usize },

    #[error("every point has depth at or below the cutvalue {cut}")]
    AllTrimmed { cut: f64 },

    #[error("dispersion matrix is numerically singular (reciprocal condition {rcond:e})")]
    SingularDispersion { rcond: f64 },

    #[error("bootstrap gave up after {attempts} draws without {needed} usable resamples")]
    ResampleExhausted { attempts: usize, needed: usize },

    #[error("replication {replication} failed: {source}")]
    Replication {
        replication: usize,
        #[source]
        source: Box<SpcError>,
    },

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("subgroup {id} has {found} rows, expected {expected}")]
    RaggedSubgroup { id: i64, expected: usize, found: usize },

    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for SpcError {
    fn from(e: std::io::Error) -> Self {
        SpcError::Io(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> SpcError {
    SpcError::InvalidParameter(msg.into())
}
