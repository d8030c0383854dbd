//! Achievable rates and QoS targets.
//!
//! Short-packet rates use the normal approximation of the finite-blocklength
//! rate with the channel dispersion fixed to 1.

use std::f64::consts::LN_2;

use crate::qfunc::q_inv;

/// Finite-blocklength back-off `Phi = sqrt(1/(D W)) * Q^{-1}(eps) / ln 2`, bits/s/Hz.
fn blocklength_penalty(bandwidth_hz: f64, latency_s: f64, error_prob: f64) -> f64 {
    (1.0 / (latency_s * bandwidth_hz)).sqrt() * q_inv(error_prob) / LN_2
}

/// URLLC rate in bps. May be negative at low SINR; callers treat that as a
/// violated requirement.
pub fn rate_urllc(sinr: f64, bandwidth_hz: f64, latency_s: f64, error_prob: f64) -> f64 {
    bandwidth_hz * ((1.0 + sinr).log2() - blocklength_penalty(bandwidth_hz, latency_s, error_prob))
}

/// mMTC rate in bps; same finite-blocklength form as URLLC on the selected subchannel.
pub fn rate_mmtc(sinr: f64, bandwidth_hz: f64, latency_s: f64, error_prob: f64) -> f64 {
    rate_urllc(sinr, bandwidth_hz, latency_s, error_prob)
}

/// Shannon rate in bps for eMBB users.
pub fn rate_embb(sinr: f64, bandwidth_hz: f64) -> f64 {
    bandwidth_hz * (1.0 + sinr).log2()
}

/// SINR needed to deliver `bits` within `latency_s` at error probability `error_prob`:
/// `2^(n/(D W) + Q^{-1}(eps)/(ln2 sqrt(D W))) - 1`.
pub fn target_snr(bits: f64, latency_s: f64, bandwidth_hz: f64, error_prob: f64) -> f64 {
    let dw = latency_s * bandwidth_hz;
    (bits / dw + q_inv(error_prob) / (LN_2 * dw.sqrt())).exp2() - 1.0
}

/// Rate demand corresponding to [`target_snr`]; analytically `bits / latency_s`.
pub fn target_rate(bits: f64, latency_s: f64, bandwidth_hz: f64, error_prob: f64) -> f64 {
    rate_urllc(
        target_snr(bits, latency_s, bandwidth_hz, error_prob),
        bandwidth_hz,
        latency_s,
        error_prob,
    )
}
