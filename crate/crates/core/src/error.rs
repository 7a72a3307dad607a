use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    /// Zero total intensity on one side, so a volatility vanishes.
    #[error("degenerate intensity profile at z = {z}: {side} variance is zero")]
    DegenerateProfile { z: f64, side: &'static str },

    /// The reduced diffusion coefficient ν(z) vanishes or is too small.
    #[error("singular coefficients at z = {z}: nu = {nu:e}")]
    SingularCoefficient { z: f64, nu: f64 },

    #[error("numerical failure: {what}{}", .at.map(|z| format!(" at {z}")).unwrap_or_default())]
    NumericalFailure { what: String, at: Option<f64> },

    /// Truncated series or quadrature left more mass outside than tolerated.
    #[error("quadrature did not converge: tail estimate {tail:e} exceeds tolerance {tol:e}")]
    Nonconvergent { tail: f64, tol: f64 },

    #[error("inconclusive experiment: no path completed ({censored} censored, {stalled} stalled)")]
    Inconclusive { censored: u64, stalled: u64 },

    #[error("reflecting cap {cap} too small: doubling changed the answer by {delta:e}")]
    CapInsufficient { cap: usize, delta: f64 },

    #[error("format error: {0}")]
    Format(String),

    #[error("ingestion failed: {malformed} of {total} rows malformed; first problems: {}", .samples.join("; "))]
    Ingestion {
        malformed: usize,
        total: usize,
        samples: Vec<String>,
    },

    #[error("records out of order: {0}")]
    Ordering(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("hidden liquidity is unidentifiable: every model point sits at 1/2")]
    Unidentifiable,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn numerical(what: impl Into<String>, at: Option<f64>) -> Self {
        Error::NumericalFailure {
            what: what.into(),
            at,
        }
    }
}
