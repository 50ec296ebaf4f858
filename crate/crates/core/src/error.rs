use thiserror::Error;

use crate::model::{Action, StateId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SteelError {
    #[error("action {action} is out of range for an environment with {count} actions")]
    ActionOutOfRange { action: usize, count: usize },

    #[error("observation width {found} does not match expected width {expected}")]
    WidthMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error("invalid Markov chain: {0}")]
    InvalidChain(String),

    #[error("transition ({state:?}, {action:?}) is already {existing:?}; refusing to overwrite with {new:?}")]
    DynamicsConflict {
        state: StateId,
        action: Action,
        existing: StateId,
        new: StateId,
    },

    #[error("learned state count exceeded the bound N = {0}")]
    StateBoundExceeded(usize),

    #[error("contract violation: {0}")]
    Contract(String),
}

pub type Result<T, E = SteelError> = std::result::Result<T, E>;
