use thiserror::Error;

/// Errors raised by the valuation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    /// The conditional law of the information variable is not equivalent
    /// to its prior (some atom carries zero conditional mass, or the implied
    /// prior disagrees with the grid).
    #[error("equivalence violation: {0}")]
    EquivalenceViolation(String),

    #[error("enumeration explosion: {count} candidates exceed the cap of {cap}")]
    Explosion { count: u128, cap: u128 },

    #[error("degenerate density: alpha = {alpha:e} at time {time}, node {node}, atom {atom}")]
    DegenerateDensity {
        alpha: f64,
        time: usize,
        node: usize,
        atom: usize,
    },

    #[error("fixed-point sweeps did not converge after {sweeps} sweeps (last relative change {change:e})")]
    NonConvergence { sweeps: usize, change: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn shape<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Shape(msg.into()))
}
