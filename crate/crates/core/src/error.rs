use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("random variable needs at least one atom")]
    EmptyInput,

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("atom counts {left} and {right} are not comparable (neither divides the other)")]
    IncomparableSupports { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected} atoms, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-integrable input: {0}")]
    NotIntegrable(String),

    #[error("not in L^Phi: modular is infinite for every scale in the search range")]
    NotInOrliczSpace,

    #[error("conjugate is infinite at s = {s}")]
    ConjugateInfinite { s: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid refinement chain: {0}")]
    InvalidChain(String),

    #[error("empty effective domain: every Kusuoka candidate has infinite penalty")]
    EmptyEffectiveDomain,

    #[error("empty acceptance intersection: no sample satisfies rho(X) <= 0")]
    EmptyAcceptance,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numerical check failed: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Domain errors are mathematical verdicts about the input (exit status 2
    /// in the CLI); the rest are I/O or parse failures (exit status 1).
    pub fn is_domain(&self) -> bool {
        !matches!(self, Error::Parse(_) | Error::Io(_) | Error::Csv(_))
    }
}
