use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// What went wrong while decoding a PGM stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PgmErrorKind {
    UnsupportedMagic(String),
    MalformedHeader(&'static str),
    Truncated { expected: usize, found: usize },
    BadSample(String),
}

impl std::fmt::Display for PgmErrorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PgmErrorKind::UnsupportedMagic(m) => write!(f, "unsupported magic number {m:?}"),
            PgmErrorKind::MalformedHeader(what) => write!(f, "malformed header: {what}"),
            PgmErrorKind::Truncated { expected, found } => {
                write!(f, "truncated payload: expected {expected} samples, found {found}")
            }
            PgmErrorKind::BadSample(s) => write!(f, "bad sample {s:?}"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("PGM parse error at byte {offset}: {kind}")]
    Pgm { offset: usize, kind: PgmErrorKind },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dense materialization of n = {n} exceeds cap {cap}; use a smaller instance")]
    OverDenseCap { n: usize, cap: usize },

    #[error("non-finite value in iterate at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("QR iteration did not converge after {iterations} iterations")]
    EigenNoConvergence { iterations: usize },

    #[error("spectral radius {rho} >= 1: fixed point not guaranteed to exist")]
    NotConvergent { rho: f64 },

    #[error("Gershgorin certificate fails even at gamma = {smallest_gamma:e}")]
    NoCertifiedStep { smallest_gamma: f64 },

    #[error("config error at line {line}, field `{field}`: {message}")]
    Config {
        line: usize,
        field: String,
        message: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, got })
        }
    }
}
