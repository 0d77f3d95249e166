use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{0} is not prime")]
    NotPrime(u32),
    #[error("prime {0} exceeds the supported bound {max}", max = crate::field::MAX_PRIME)]
    PrimeTooLarge(u32),
    #[error("symbol {value} is not a residue modulo {p}")]
    SymbolOutOfRange { value: u32, p: u32 },
    #[error("no inverse of zero")]
    ZeroInverse,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid code parameters: {0}")]
    InvalidParams(String),
    #[error("invalid parity-check matrix: {0}")]
    InvalidMatrix(String),
    #[error("girth constraint unsatisfiable at this size")]
    GirthUnsatisfiable,
    #[error("no coefficient tuple of length {t} over F_{p} has minimum distance above sqrt(2)")]
    NoQualifyingCoefficients { t: usize, p: u32 },
    #[error("invalid generator matrix: {0}")]
    InvalidGenerator(String),
    #[error("invalid message: {0}")]
    InvalidMessage(String),
    #[error("input not a constellation point")]
    NotConstellationPoint,
    #[error("Leech generator invariant violated: {0}")]
    LeechInvariant(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }
}
