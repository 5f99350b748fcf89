use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unsupported alphabet `{0}` (expected bpsk, qpsk, psk8 or qam16)")]
    UnsupportedAlphabet(String),

    #[error("unsupported scheme `{0}` (expected sm, gsm, qsm or cqsm)")]
    UnsupportedScheme(String),

    #[error("set needs at least two symbols, got {0}")]
    SetTooSmall(usize),

    #[error("invalid angle range: {0}")]
    InvalidGrid(String),

    #[error("subset index {0} out of range 1..=4")]
    SubsetIndex(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("rotation angle {theta_deg} deg makes the {alphabet} hypothesis map ambiguous")]
    DegenerateAngle { alphabet: String, theta_deg: f64 },

    #[error("expected {expected} bits, got {got}")]
    BitCount { expected: usize, got: usize },

    #[error("symbol {0} is not a member of the configured set")]
    UnknownSymbol(String),

    #[error("antenna index {index} outside 1..={n_t}")]
    AntennaIndex { index: usize, n_t: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("spectral efficiency M = {m} exceeds the pair-enumeration guard of {max} (cost grows as 4^M)")]
    BoundTooLarge { m: usize, max: usize },

    #[error("i/o error: {0}")]
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
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
