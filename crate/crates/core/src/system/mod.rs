//! Physical-layer model of an uplink semi-grant-free NOMA cell.
//!
//! Everything here is a pure function of its inputs. Rates are analytic: no
//! symbol-level SIC is simulated.

mod channel;
mod config;
mod evaluate;
mod noma;
mod rates;

pub use channel::{generate_channels, rician_power_gain, ChannelRealization};
pub use config::{
    bandwidth_of, noise_power, ChannelModel, NetworkConfig, NoiseModel, PathLoss, Position, Qos, ScenarioParams,
    ServiceClass, ServiceSet, Subchannel, UserDevice,
};
pub use evaluate::{
    check_constraints, ee_factor, evaluate, AllocationState, Constraint, ConstraintReport, Evaluation, Violation,
    FEASIBILITY_RTOL,
};
pub use noma::{decoding_order, sinr};
pub use rates::{rate_embb, rate_mmtc, rate_urllc, target_rate, target_snr};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("numerology index {0} is outside 0..=4")]
    InvalidNumerology(u8),
    #[error("noise power must be positive, got {0}")]
    InvalidNoise(f64),
    #[error("subchannel {subchannel} carries more than one grant-based user ({users:?})")]
    GrantBasedCollision { subchannel: usize, users: Vec<usize> },
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("user {user} has power on subchannel {subchannel} without being assigned to it")]
    UnassignedPower { user: usize, subchannel: usize },
}
