//! Energy-efficient resource allocation for uplink semi-grant-free NOMA 5G-NR cells.
//!
//! The crate covers the physical-layer model ([`system`]), the Dinkelbach power
//! optimizer used by HOMAD ([`power`]), a small dense network with Adam
//! ([`nn`]), per-agent learning machinery ([`agents`]), the multi-agent training
//! loop for HOMAD, Full-MAD and Full-MAQL ([`trainer`]), and the experiment
//! harness that drives sweeps and writes CSV ([`experiment`]).

pub mod agents;
pub mod api;
pub mod experiment;
pub mod nn;
pub mod power;
pub mod qfunc;
pub mod system;
pub mod trainer;
