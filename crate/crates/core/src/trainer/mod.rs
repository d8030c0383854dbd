//! Episode/time-slot loop for the three learning schemes, environment
//! stepping and the shared reward.

mod convergence;
mod env;
mod run;

pub use convergence::{detect_convergence, final_window_mean};
pub use env::{
    apply_actions_fullmad, apply_actions_homad, compute_reward, grant_based_minimum, SlotFlag, TimeslotOutcome,
};
pub use run::{run_training, EpisodeRecord, TrainedModels, TrainingConfig, TrainingLog, TrainingRun};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{ActionMode, AgentError};
use crate::system::ModelError;

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// Learning scheme. Text form: `homad`, `fullmad:L`, `fullmaql:L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scheme {
    /// DQN subchannel selection with optimized powers.
    Homad,
    /// DQN over subchannel and `levels` quantized powers.
    FullMad { levels: usize },
    /// Tabular Q-learning over the same joint actions.
    FullMaql { levels: usize },
}

impl Scheme {
    pub fn action_mode(self) -> ActionMode {
        match self {
            Scheme::Homad => ActionMode::SubchannelOnly,
            Scheme::FullMad { levels } | Scheme::FullMaql { levels } => ActionMode::Joint { levels },
        }
    }

    pub fn is_tabular(self) -> bool {
        matches!(self, Scheme::FullMaql { .. })
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Homad => f.write_str("homad"),
            Scheme::FullMad { levels } => write!(f, "fullmad:{levels}"),
            Scheme::FullMaql { levels } => write!(f, "fullmaql:{levels}"),
        }
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        let (name, levels) = match s.split_once(':') {
            Some((n, l)) => (
                n,
                Some(
                    l.parse::<usize>()
                        .map_err(|_| format!("bad level count in scheme {s:?}"))?,
                ),
            ),
            None => (s.as_str(), None),
        };
        let scheme = match (name, levels) {
            ("homad", None) => Scheme::Homad,
            ("fullmad", l) => Scheme::FullMad { levels: l.unwrap_or(4) },
            ("fullmaql", l) => Scheme::FullMaql { levels: l.unwrap_or(4) },
            _ => return Err(format!("unknown scheme {s:?}; expected homad, fullmad:L or fullmaql:L")),
        };
        match scheme {
            Scheme::FullMad { levels: 0 } | Scheme::FullMaql { levels: 0 } => {
                Err("level count must be at least 1".into())
            }
            _ => Ok(scheme),
        }
    }
}

impl TryFrom<String> for Scheme {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> Self {
        s.to_string()
    }
}
