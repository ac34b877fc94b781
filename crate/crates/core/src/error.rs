use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("no ground state bracket found in (0, {s_max}]")]
    NoBracket { s_max: f64 },

    #[error("solver did not converge: {0}")]
    Solver(String),

    #[error("no negative eigenvalue (lowest = {lowest})")]
    NoNegativeEigenvalue { lowest: f64 },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("coercivity failure: constant = {0}")]
    Coercivity(f64),

    #[error("blow-up after t = {last_valid_time}")]
    BlowUp { last_valid_time: f64 },

    #[error("modulation failed: {0}")]
    Modulation(String),

    #[error("construction error: {0}")]
    Construction(String),

    #[error("aiming failed after {runs} backward runs: {reason}")]
    Aim { runs: usize, reason: String },

    #[error("snapshot format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
