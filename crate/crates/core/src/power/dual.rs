//! Dual subgradient solvers for grant-based users.
//!
//! Both problems are solved in normalized units: powers as fractions of the
//! budget, rates in bits/s/Hz and multipliers on power scaled by `P_max / W`.
//! In these units a single step rule `delta_v = step0 / sqrt(v)`, preconditioned
//! once at the starting point, works across the whole parameter range.
//!
//! The stationary primal point for fixed multipliers is a water level
//! `L = (1 + mu) / ((nu + zeta) ln 2)`. After the subgradient loop stops, the
//! level is clamped into the exactly feasible interval, so returned powers
//! never violate the budget or the rate demand by rounding.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::PowerError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualConfig {
    pub max_iterations: usize,
    /// Relative tolerance on the rate demand.
    pub rate_rtol: f64,
    /// Relative tolerance on the power budget.
    pub power_rtol: f64,
    /// Bound on normalized complementary-slackness residuals.
    pub slackness_tol: f64,
    pub step0: f64,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            rate_rtol: 1e-4,
            power_rtol: 1e-4,
            slackness_tol: 1e-3,
            step0: 1.0,
        }
    }
}

/// Multipliers and termination diagnostics of one dual solve.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    /// Rate-demand multiplier (eMBB), dimensionless.
    pub mu: f64,
    /// Budget multiplier (eMBB), bits/J.
    pub nu: f64,
    /// Budget multiplier (URLLC), bits/J.
    pub theta: f64,
    /// Last step size used.
    pub step: f64,
    pub iterations: usize,
    /// Tolerances met by the subgradient iterates themselves.
    pub converged: bool,
    /// The final water level was moved to restore exact feasibility.
    pub recovered: bool,
    /// `(sum C - R_tar) / R_tar`, zero when there is no rate demand.
    pub rate_residual: f64,
    /// `(sum p - P_max) / P_max`.
    pub power_residual: f64,
    /// `mu (R_tar - sum C) / W`.
    pub slackness_rate: f64,
    /// Budget multiplier times `(sum p - P_max) / P_max`, multiplier in `P_max / W` units.
    pub slackness_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub powers: Vec<f64>,
    pub state: DualState,
}

fn water_level(multiplier_num: f64, multiplier_den: f64) -> f64 {
    if multiplier_den > 0.0 {
        multiplier_num / (multiplier_den * LN_2)
    } else {
        f64::INFINITY
    }
}

/// Smallest `x` in `[lo, hi]` with `f(x) >= target` for nondecreasing `f`;
/// returns the end of the bracket on the requested side.
fn bisect<F: Fn(f64) -> f64>(f: F, target: f64, mut lo: f64, mut hi: f64, upper: bool) -> f64 {
    while f(hi) < target {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if upper {
        hi
    } else {
        lo
    }
}

/// Largest level whose allocation fits the unit budget.
fn budget_level<F: Fn(f64) -> f64>(power_at: F, start_hi: f64) -> f64 {
    // f(L) = sum x(L) is nondecreasing; take the low side so sum x <= 1.
    let l = bisect(&power_at, 1.0, 0.0, start_hi.max(1e-300), false);
    if power_at(l) > 1.0 {
        0.0
    } else {
        l
    }
}

/// eMBB power over its `n` subchannels.
///
/// Maximizes `sum_j W log2(1 + A_j p_j) - zeta p_j` subject to
/// `sum_j C_j >= R_tar` and `sum_j p_j <= P_max`. For multipliers `(mu, nu)`
/// the Lagrangian maximizer is `p_j = max((1+mu) W / ((nu+zeta) ln 2) - 1/A_j, 0)`;
/// `mu` and `nu` follow projected subgradient steps.
pub fn optimize_embb_power(
    effective_gains: &[f64],
    rate_target_bps: f64,
    p_max: f64,
    zeta: f64,
    bandwidth_hz: f64,
    cfg: &DualConfig,
) -> Result<DualSolution, PowerError> {
    if effective_gains.is_empty() {
        return if rate_target_bps <= 0.0 {
            Ok(DualSolution {
                powers: vec![],
                state: DualState {
                    converged: true,
                    ..Default::default()
                },
            })
        } else {
            Err(PowerError::infeasible("eMBB user holds no subchannel"))
        };
    }
    let inv_a: Vec<f64> = effective_gains.iter().map(|a| 1.0 / (a * p_max)).collect();
    let r = rate_target_bps / bandwidth_hz;
    let z = zeta * p_max / bandwidth_hz;

    let alloc = |level: f64| -> Vec<f64> { inv_a.iter().map(|c| (level - c).max(0.0)).collect() };
    let power_at = |level: f64| -> f64 { inv_a.iter().map(|c| (level - c).max(0.0)).sum() };
    let rate_at = |level: f64| -> f64 { inv_a.iter().map(|c| (level / c).max(1.0).log2()).sum() };

    let min_c = inv_a.iter().copied().fold(f64::INFINITY, f64::min);
    let level_p = budget_level(power_at, 1.0 + min_c);
    let level_r = if r > 0.0 {
        bisect(rate_at, r, 0.0, 2.0 * min_c, true)
    } else {
        0.0
    };
    if level_r > level_p {
        return Err(PowerError::infeasible(format!(
            "rate demand {rate_target_bps:.4e} bps needs more than the {p_max:.4e} W budget"
        )));
    }

    let mut mu = 0.0;
    let mut nu = if z > 0.0 { 0.0 } else { 1.0 / (level_p * LN_2) };
    let level0 = water_level(1.0 + mu, nu + z);
    let active0 = inv_a.iter().filter(|&&c| level0 > c).count().max(1) as f64;
    let scale_mu = (1.0 + mu) * LN_2 / active0;
    let scale_nu = (nu + z) / (active0 * level0.min(level_p.max(min_c)));

    let mut st = DualState::default();
    for v in 1..=cfg.max_iterations {
        let level = water_level(1.0 + mu, nu + z);
        let rate_gap = rate_at(level) - r;
        let power_gap = power_at(level) - 1.0;
        st.iterations = v;
        let feasible = rate_gap >= -cfg.rate_rtol * r && power_gap <= cfg.power_rtol;
        if feasible && (mu * rate_gap).abs() < cfg.slackness_tol && (nu * power_gap).abs() < cfg.slackness_tol {
            st.converged = true;
            break;
        }
        let delta = cfg.step0 / (v as f64).sqrt();
        st.step = delta;
        mu = (mu - delta * scale_mu * rate_gap).max(0.0);
        nu = (nu + delta * scale_nu * power_gap).max(0.0);
    }

    let raw = water_level(1.0 + mu, nu + z);
    let level = raw.clamp(level_r, level_p);
    st.recovered = level != raw;
    let x = alloc(level);
    let sum_c = rate_at(level);
    let sum_x: f64 = x.iter().sum();
    st.mu = mu;
    st.nu = nu * bandwidth_hz / p_max;
    st.rate_residual = if r > 0.0 { (sum_c - r) / r } else { 0.0 };
    st.power_residual = sum_x - 1.0;
    st.slackness_rate = mu * (r - sum_c);
    st.slackness_power = nu * (sum_x - 1.0);
    Ok(DualSolution {
        powers: x.into_iter().map(|v| v * p_max).collect(),
        state: st,
    })
}

/// Least total power meeting an eMBB rate demand: inverse water-filling
/// `p_j = max(L - 1/A_j, 0)` with the level set so the rates sum to `R_tar`.
pub fn minimum_embb_power(
    effective_gains: &[f64],
    rate_target_bps: f64,
    p_max: f64,
    bandwidth_hz: f64,
) -> Result<Vec<f64>, PowerError> {
    if rate_target_bps <= 0.0 {
        return Ok(vec![0.0; effective_gains.len()]);
    }
    if effective_gains.is_empty() {
        return Err(PowerError::infeasible("eMBB user holds no subchannel"));
    }
    let inv_a: Vec<f64> = effective_gains.iter().map(|a| 1.0 / a).collect();
    let r = rate_target_bps / bandwidth_hz;
    let rate_at = |level: f64| -> f64 { inv_a.iter().map(|c| (level / c).max(1.0).log2()).sum() };
    let min_c = inv_a.iter().copied().fold(f64::INFINITY, f64::min);
    let level = bisect(rate_at, r, 0.0, 2.0 * min_c, true);
    let powers: Vec<f64> = inv_a.iter().map(|c| (level - c).max(0.0)).collect();
    let total: f64 = powers.iter().sum();
    if !(total <= p_max) {
        return Err(PowerError::infeasible(format!(
            "rate demand {rate_target_bps:.4e} bps needs {total:.4e} W, budget is {p_max:.4e} W"
        )));
    }
    Ok(powers)
}

/// URLLC power over its `l` subchannels.
///
/// Maximizes `sum_j W log2(1 + A_j p_j) - zeta p_j` with per-subchannel floors
/// `p_j >= gamma_tar / A_j` and `sum_j p_j <= P_max`:
/// `p_j = max(W / ((theta+zeta) ln 2) - 1/A_j, gamma_tar / A_j)`, with `theta`
/// following projected subgradient steps on the budget.
pub fn optimize_urllc_power(
    effective_gains: &[f64],
    gamma_tar: f64,
    p_max: f64,
    zeta: f64,
    bandwidth_hz: f64,
    cfg: &DualConfig,
) -> Result<DualSolution, PowerError> {
    if effective_gains.is_empty() {
        return Err(PowerError::infeasible("URLLC user holds no subchannel"));
    }
    let inv_a: Vec<f64> = effective_gains.iter().map(|a| 1.0 / (a * p_max)).collect();
    let floors: Vec<f64> = inv_a.iter().map(|c| gamma_tar * c).collect();
    let floor_sum: f64 = floors.iter().sum();
    if floor_sum > 1.0 + 1e-12 {
        return Err(PowerError::infeasible(format!(
            "URLLC floors need {:.4e} W, budget is {p_max:.4e} W",
            floor_sum * p_max
        )));
    }
    let z = zeta * p_max / bandwidth_hz;

    let alloc = |level: f64| -> Vec<f64> { inv_a.iter().zip(&floors).map(|(c, f)| (level - c).max(*f)).collect() };
    let power_at = |level: f64| -> f64 { inv_a.iter().zip(&floors).map(|(c, f)| (level - c).max(*f)).sum() };

    let min_c = inv_a.iter().copied().fold(f64::INFINITY, f64::min);
    let level_p = if floor_sum >= 1.0 {
        // budget exhausted by floors: any level at or below the first breakpoint
        inv_a
            .iter()
            .zip(&floors)
            .map(|(c, f)| c + f)
            .fold(f64::INFINITY, f64::min)
    } else {
        budget_level(power_at, 1.0 + min_c)
    };

    let mut theta = if z > 0.0 { 0.0 } else { 1.0 / (level_p * LN_2) };
    let level0 = water_level(1.0, theta + z);
    let active0 = inv_a
        .iter()
        .zip(&floors)
        .filter(|(c, f)| level0 > *c + *f)
        .count()
        .max(1) as f64;
    let scale = (theta + z) / (active0 * level0.min(level_p.max(min_c)));

    let mut st = DualState::default();
    for v in 1..=cfg.max_iterations {
        let level = water_level(1.0, theta + z);
        let power_gap = power_at(level) - 1.0;
        st.iterations = v;
        if power_gap <= cfg.power_rtol && (theta * power_gap).abs() < cfg.slackness_tol {
            st.converged = true;
            break;
        }
        let delta = cfg.step0 / (v as f64).sqrt();
        st.step = delta;
        theta = (theta + delta * scale * power_gap).max(0.0);
    }

    let raw = water_level(1.0, theta + z);
    let level = raw.min(level_p);
    st.recovered = level != raw;
    let x = alloc(level);
    let sum_x: f64 = x.iter().sum();
    st.theta = theta * bandwidth_hz / p_max;
    st.power_residual = sum_x - 1.0;
    st.slackness_power = theta * (sum_x - 1.0);
    Ok(DualSolution {
        powers: x.into_iter().map(|v| v * p_max).collect(),
        state: st,
    })
}
