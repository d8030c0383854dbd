//! Transmit-power optimization for a fixed subchannel assignment.
//!
//! [`dinkelbach_allocate`] runs the Dinkelbach outer loop on the EE ratio. Two
//! inner solvers are available. The sequential pass walks every subchannel in
//! reverse decoding order: an mMTC user's power has a closed form once everyone
//! decoded after it is fixed, and grant-based users are solved by dual
//! subgradient methods once all of their subchannels have reached them. The
//! joint pass ([`solve_subchannel`]) solves each subchannel's subproblem exactly
//! and is the default.

mod dinkelbach;
mod dual;
mod joint;
mod mmtc;

pub use dinkelbach::{
    dinkelbach_allocate, dinkelbach_gap, minimum_powers, solve_powers, subtractive_objective, DinkelbachConfig,
    InnerSolver, IterationRecord, PowerAllocation,
};
pub use dual::{minimum_embb_power, optimize_embb_power, optimize_urllc_power, DualConfig, DualSolution, DualState};
pub use joint::{solve_subchannel, SicUser};
pub use mmtc::optimize_mmtc_power;

use thiserror::Error;

use crate::system::ModelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    /// A QoS floor cannot be met within the power budget. Not fatal for training:
    /// the slot simply earns no reward.
    #[error("infeasible power allocation{}: {detail}", user.map(|u| format!(" for user {u}")).unwrap_or_default())]
    Infeasible { user: Option<usize>, detail: String },
    #[error("Dinkelbach iteration did not converge after {iterations} iterations (last zeta {last_zeta})")]
    NotConverged { iterations: usize, last_zeta: f64 },
    #[error("assignment is not admissible: {0}")]
    InvalidAssignment(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl PowerError {
    pub(crate) fn infeasible(detail: impl Into<String>) -> Self {
        PowerError::Infeasible {
            user: None,
            detail: detail.into(),
        }
    }

    pub(crate) fn for_user(self, z: usize) -> Self {
        match self {
            PowerError::Infeasible { detail, .. } => PowerError::Infeasible { user: Some(z), detail },
            other => other,
        }
    }
}
