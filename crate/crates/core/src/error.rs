use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("chain length {0} is invalid: must be even and at least 2")]
    InvalidLength(usize),

    #[error("chain length {len} exceeds the limit {max} for {what}")]
    TooLarge { len: usize, max: usize, what: &'static str },

    #[error("measurement rate {0} is outside [0, 1]")]
    InvalidRate(f64),

    #[error("bond {bond} is out of range for a chain of {len} sites")]
    BondOutOfRange { bond: usize, len: usize },

    #[error("site {site} is out of range for a chain of {len} sites")]
    SiteOutOfRange { site: usize, len: usize },

    #[error("sector (q = {charge_offset}, parity {parity}) is empty for L = {len}")]
    EmptySector { charge_offset: i64, parity: &'static str, len: usize },

    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix dimension {0} is not a power of two")]
    NotQubitOperator(usize),

    #[error("state is corrupt: every outcome probability is below {0:e}")]
    CorruptState(f64),

    #[error("trace {0:e} is not positive")]
    NonPositiveTrace(f64),

    #[error("invalid truncation policy: {0}")]
    InvalidPolicy(String),

    #[error("singular value decomposition failed to converge")]
    Svd,

    #[error("length mismatch: {0} vs {1} sites")]
    LengthMismatch(usize, usize),

    #[error("record format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },

    #[error("record is inconsistent: {0}")]
    InconsistentRecord(String),

    #[error("both likelihoods are zero; posterior is undefined")]
    DegeneratePosterior,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("degenerate fit: {0}")]
    DegenerateFit(&'static str),

    #[error("all trajectory weights underflow")]
    WeightUnderflow,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing input: {0}")]
    MissingInput(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
