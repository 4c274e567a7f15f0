use thiserror::Error;

/// Errors produced across the library.
#[derive(Error, Debug)]
pub enum Error {
    #[error("unknown example id {0}, expected 1, 2 or 3")]
    UnknownExample(u32),

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("Newton iteration did not converge after {iters} steps (last residual {residual:.3e})")]
    NewtonDiverged { iters: usize, residual: f64 },

    #[error("dataset generation failed on corner {corner:?}: {source}")]
    DatasetCorner {
        corner: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("greedy selection aborted: power function value {value:.3e} below -1e-12 at candidate {index}")]
    NegativePower { index: usize, value: f64 },

    #[error("duplicate center at index {0} (coincident within 1e-14 or equal to the origin)")]
    DuplicateCenter(usize),

    #[error("factorization breakdown: {0}")]
    Factorization(String),

    #[error("ill-conditioned system (condition estimate {cond:.3e}, solve residual {residual:.3e}); increase lambda or thin the centers")]
    IllConditioned { cond: f64, residual: f64 },

    #[error("Taylor expansion invalid: {0}")]
    TaylorDomain(String),

    #[error("minimizer certificate violated for perturbation seed {seed}: J(h+g) - J(h) = {delta:.3e}")]
    CertificateViolation { seed: u64, delta: f64 },

    #[error("perturbation bound violated at t = {t}: measured {measured:.3e} > bound {bound:.3e}")]
    BoundViolation { t: f64, measured: f64, bound: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
