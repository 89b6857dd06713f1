use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain dimension must be 1 or 3, got {0}")]
    BadDimension(usize),

    #[error("mode truncation must be at least 4, got {0}")]
    BadTruncation(usize),

    #[error("fields live on different domains or incompatible bases")]
    BasisMismatch,

    #[error("exponent constraint violated: {0}")]
    BadExponents(String),

    #[error("negative fractional power hit a zero-eigenvalue mode")]
    ZeroMode,

    #[error(
        "fixed-point iteration failed to contract on [{t0:.4}, {t1:.4}]: \
         measured factor {factor:.3e} after {iters} iterations"
    )]
    NoContraction {
        factor: f64,
        iters: usize,
        t0: f64,
        t1: f64,
    },

    #[error("trajectory left the blow-up guard: norm {norm:.3e} at t = {t:.4}")]
    BlowUp { norm: f64, t: f64 },

    #[error("series diverges for the requested exponents")]
    DivergentSeries,

    #[error("smallness condition violated: {0}")]
    Smallness(String),

    #[error("config: {0}")]
    Config(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
