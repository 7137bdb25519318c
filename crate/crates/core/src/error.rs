use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// Two configurations (or a configuration and a model) disagree on `N`.
    SizeMismatch { expected: usize, found: usize },
    /// An engine was asked for more sites than it can enumerate or store.
    Capacity {
        engine: &'static str,
        n_sites: usize,
        limit: usize,
    },
    InvalidSpec(String),
    InvalidMonomial(String),
    InvalidBeta(f64),
    Unsupported(String),
    DegenerateLadder(String),
    InsufficientSamples { needed: usize, available: usize },
    Format(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::SizeMismatch { expected, found } => {
                write!(f, "size mismatch: expected {expected} sites, found {found}")
            }
            Error::Capacity {
                engine,
                n_sites,
                limit,
            } => write!(
                f,
                "{engine} engine capacity exceeded: N = {n_sites} > {limit}"
            ),
            Error::InvalidSpec(msg) => write!(f, "invalid model spec: {msg}"),
            Error::InvalidMonomial(msg) => write!(f, "invalid monomial: {msg}"),
            Error::InvalidBeta(b) => write!(f, "invalid inverse temperature {b}"),
            Error::Unsupported(msg) => write!(f, "unsupported: {msg}"),
            Error::DegenerateLadder(msg) => write!(f, "degenerate beta ladder: {msg}"),
            Error::InsufficientSamples { needed, available } => write!(
                f,
                "insufficient samples: need at least {needed}, have {available}"
            ),
            Error::Format(msg) => write!(f, "format error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
