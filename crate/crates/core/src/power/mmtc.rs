use std::f64::consts::LN_2;

use super::PowerError;

/// EE-optimal power of an mMTC user given everything decoded after it.
///
/// Maximizes `W log2(1 + A p) - zeta p` over `[gamma_tar / A, p_max]`:
/// `min(max(W/(zeta ln2) - 1/A, gamma_tar/A), p_max)`. With `zeta = 0` the
/// unconstrained optimum is unbounded and the budget is used in full.
pub fn optimize_mmtc_power(
    effective_gain: f64,
    gamma_tar: f64,
    p_max: f64,
    zeta: f64,
    bandwidth_hz: f64,
) -> Result<f64, PowerError> {
    let floor = gamma_tar / effective_gain;
    if floor > p_max * (1.0 + 1e-12) {
        return Err(PowerError::infeasible(format!(
            "SINR floor needs {floor:.6e} W, budget is {p_max:.6e} W"
        )));
    }
    let unconstrained = if zeta > 0.0 {
        bandwidth_hz / (zeta * LN_2) - 1.0 / effective_gain
    } else {
        f64::INFINITY
    };
    Ok(unconstrained.max(floor).min(p_max))
}
