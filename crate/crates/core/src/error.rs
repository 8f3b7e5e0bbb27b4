use thiserror::Error;

/// Errors raised by the analysis and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("topology {index} is not connected")]
    Disconnected { index: usize },

    #[error("channel list does not cover edge {{{0}, {1}}} of topology {2}")]
    UncoveredEdge(usize, usize, usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("no admissible epsilon after {0} halvings; equilibrium is on or beyond the security boundary")]
    EpsilonNotFound(usize),

    #[error("insufficient history: need {needed:.4} s, have {available:.4} s")]
    InsufficientHistory { needed: f64, available: f64 },

    #[error("SDP oracle failure: {0}")]
    Oracle(String),

    #[error("no feasible gain above {0:e}")]
    NoFeasibleGain(f64),

    #[error("empirical threshold indeterminate: {0}")]
    Indeterminate(String),

    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::Dimension(format!(
            "{what}: expected {want}, got {got}"
        )));
    }
    Ok(())
}
