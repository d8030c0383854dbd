//! Per-agent learning machinery: observation encoding, action layout,
//! exploration, replay memory, the DQN update and the tabular baseline.

mod action;
mod dqn;
mod policy;
mod qtable;
mod replay;
mod state;

pub use action::{power_levels, Action, ActionMode, ActionSpace};
pub use dqn::{DqnAgent, DqnConfig};
pub use policy::{argmax, select_action, EpsilonSchedule};
pub use qtable::{GainBins, QTable, TabularConfig};
pub use replay::{Experience, ReplayMemory};
pub use state::{Selection, StateEncoder};

use thiserror::Error;

use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("action index {index} outside an action space of size {size}")]
    ActionOutOfRange { index: usize, size: usize },
    #[error("training step rejected: {0}")]
    Rejected(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}
