use thiserror::Error;

/// Failure modes shared by every operation in the crate.
#[derive(Debug, Error)]
pub enum MdpError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("model is not communicating: state {from} cannot reach state {to}")]
    NotCommunicating { from: String, to: String },

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("illegal action at step {step}: pair {pair} is not available in state {state}")]
    IllegalAction { step: u64, pair: usize, state: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl MdpError {
    /// Non-convergence is reported with a distinct process exit code by the CLI.
    pub fn is_non_convergence(&self) -> bool {
        matches!(self, MdpError::NonConvergence(_))
    }
}

pub type Result<T> = std::result::Result<T, MdpError>;
