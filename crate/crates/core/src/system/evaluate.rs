use std::fmt;

use serde::{Deserialize, Serialize};

use super::noma::order_unchecked;
use super::rates::{rate_embb, rate_mmtc, rate_urllc, target_rate, target_snr};
use super::{sinr, ChannelRealization, ModelError, NetworkConfig, Qos, ServiceClass};

/// Relative slack applied to every inequality in [`check_constraints`] so that
/// powers placed exactly on a constraint boundary are not rejected by rounding.
pub const FEASIBILITY_RTOL: f64 = 1e-9;

/// Subchannel indicators `b_z^(k)` and transmit powers `P_z^(k)` for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationState {
    n_users: usize,
    n_subchannels: usize,
    assigned: Vec<bool>,
    power: Vec<f64>,
}

impl AllocationState {
    pub fn new(n_users: usize, n_subchannels: usize) -> Self {
        Self {
            n_users,
            n_subchannels,
            assigned: vec![false; n_users * n_subchannels],
            power: vec![0.0; n_users * n_subchannels],
        }
    }

    /// Empty allocation with the configured grants applied.
    pub fn with_grants(config: &NetworkConfig) -> Self {
        let mut s = Self::new(config.n_users(), config.n_subchannels());
        for &(z, k) in &config.grants {
            s.assign(z, k);
        }
        s
    }

    /// Builds a state from `[user][subchannel]` tables, enforcing that power is
    /// only placed on assigned pairs and is nonnegative.
    pub fn from_rows(assigned: &[Vec<bool>], power: &[Vec<f64>]) -> Result<Self, ModelError> {
        let n_users = assigned.len();
        let n_subchannels = assigned.first().map_or(0, Vec::len);
        if power.len() != n_users
            || assigned.iter().any(|r| r.len() != n_subchannels)
            || power.iter().any(|r| r.len() != n_subchannels)
        {
            return Err(ModelError::Shape(
                "assignment and power tables must share one shape".into(),
            ));
        }
        let mut s = Self::new(n_users, n_subchannels);
        for z in 0..n_users {
            for k in 0..n_subchannels {
                if assigned[z][k] {
                    s.assign(z, k);
                }
                s.set_power(z, k, power[z][k])?;
            }
        }
        Ok(s)
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_subchannels(&self) -> usize {
        self.n_subchannels
    }

    fn idx(&self, z: usize, k: usize) -> usize {
        z * self.n_subchannels + k
    }

    pub fn assign(&mut self, z: usize, k: usize) {
        let i = self.idx(z, k);
        self.assigned[i] = true;
    }

    /// Removes the pair and zeroes its power.
    pub fn unassign(&mut self, z: usize, k: usize) {
        let i = self.idx(z, k);
        self.assigned[i] = false;
        self.power[i] = 0.0;
    }

    pub fn is_assigned(&self, z: usize, k: usize) -> bool {
        self.assigned[self.idx(z, k)]
    }

    pub fn set_power(&mut self, z: usize, k: usize, p: f64) -> Result<(), ModelError> {
        if !(p >= 0.0 && p.is_finite()) {
            return Err(ModelError::Shape(format!(
                "power of user {z} on subchannel {k} must be finite and >= 0"
            )));
        }
        let i = self.idx(z, k);
        if p > 0.0 && !self.assigned[i] {
            return Err(ModelError::UnassignedPower { user: z, subchannel: k });
        }
        self.power[i] = p;
        Ok(())
    }

    pub fn power(&self, z: usize, k: usize) -> f64 {
        self.power[self.idx(z, k)]
    }

    pub fn user_power(&self, z: usize) -> f64 {
        self.power[z * self.n_subchannels..(z + 1) * self.n_subchannels]
            .iter()
            .sum()
    }

    pub fn total_power(&self) -> f64 {
        self.power.iter().sum()
    }

    /// Users occupying subchannel `k`, ascending id.
    pub fn members(&self, k: usize) -> Vec<usize> {
        (0..self.n_users).filter(|&z| self.is_assigned(z, k)).collect()
    }

    pub fn subchannels_of(&self, z: usize) -> Vec<usize> {
        (0..self.n_subchannels).filter(|&k| self.is_assigned(z, k)).collect()
    }

    pub fn assignment_rows(&self) -> Vec<Vec<bool>> {
        self.assigned
            .chunks(self.n_subchannels.max(1))
            .map(<[bool]>::to_vec)
            .collect()
    }

    pub fn power_rows(&self) -> Vec<Vec<f64>> {
        self.power
            .chunks(self.n_subchannels.max(1))
            .map(<[f64]>::to_vec)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Constraint {
    /// At most one grant-based user per subchannel.
    C1,
    /// Every mMTC user occupies exactly one subchannel.
    C2,
    /// URLLC rate meets its demand on each granted subchannel.
    C3,
    /// eMBB sum rate meets its target.
    C4,
    /// mMTC SINR meets its target.
    C5,
    /// Per-user power budget.
    C6,
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: Constraint,
    pub user: Option<usize>,
    pub subchannel: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub violations: Vec<Violation>,
}

impl ConstraintReport {
    pub fn satisfied(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violates(&self, c: Constraint) -> bool {
        self.violations.iter().any(|v| v.constraint == c)
    }
}

/// Everything derived from one allocation: per-pair SINR and rate, the
/// constraint report and the EE factor `zeta = R_tot / (P_tx + M P_c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// `[user][subchannel]`, zero where unassigned.
    pub sinr: Vec<Vec<f64>>,
    /// `[user][subchannel]` achievable rate in bps; may be negative.
    pub rate: Vec<Vec<f64>>,
    pub report: ConstraintReport,
    pub total_rate: f64,
    pub total_power: f64,
    pub zeta: f64,
}

pub fn evaluate(
    state: &AllocationState,
    channels: &ChannelRealization,
    config: &NetworkConfig,
) -> Result<Evaluation, ModelError> {
    let (m, k_n) = (config.n_users(), config.n_subchannels());
    if state.n_users() != m || state.n_subchannels() != k_n {
        return Err(ModelError::Shape(format!(
            "allocation is {}x{}, network is {m}x{k_n}",
            state.n_users(),
            state.n_subchannels()
        )));
    }
    if channels.n_users() != m || channels.n_subchannels() != k_n {
        return Err(ModelError::Shape(format!(
            "channels are {}x{}, network is {m}x{k_n}",
            channels.n_users(),
            channels.n_subchannels()
        )));
    }

    let mut gamma = vec![vec![0.0; k_n]; m];
    let mut rate = vec![vec![0.0; k_n]; m];
    let mut violations = Vec::new();

    for k in 0..k_n {
        let members = state.members(k);
        let gb: Vec<usize> = members
            .iter()
            .copied()
            .filter(|&z| config.service(z).is_grant_based())
            .collect();
        if gb.len() > 1 {
            violations.push(Violation {
                constraint: Constraint::C1,
                user: None,
                subchannel: Some(k),
            });
        }
        let order = order_unchecked(&members, k, config, channels);
        let received: Vec<f64> = order.iter().map(|&z| state.power(z, k) * channels.gain(z, k)).collect();
        let sinrs = sinr(&received, config.noise_power(k))?;
        let w = config.bandwidth(k);
        for (&z, &g) in order.iter().zip(&sinrs) {
            gamma[z][k] = g;
            rate[z][k] = match config.users[z].qos {
                Qos::Rate { .. } => rate_embb(g, w),
                Qos::Packet {
                    latency_s, error_prob, ..
                } => match config.service(z) {
                    ServiceClass::Urllc => rate_urllc(g, w, latency_s, error_prob),
                    _ => rate_mmtc(g, w, latency_s, error_prob),
                },
            };
        }
    }

    let lo = 1.0 - FEASIBILITY_RTOL;
    let mut total_rate = 0.0;
    for user in &config.users {
        let z = user.id;
        let scs = state.subchannels_of(z);
        match (user.service, user.qos) {
            (
                ServiceClass::Urllc,
                Qos::Packet {
                    bits,
                    latency_s,
                    error_prob,
                },
            ) => {
                if scs.is_empty() {
                    violations.push(Violation {
                        constraint: Constraint::C3,
                        user: Some(z),
                        subchannel: None,
                    });
                }
                for &k in &scs {
                    let r_tar = target_rate(bits, latency_s, config.bandwidth(k), error_prob);
                    if rate[z][k] < r_tar - FEASIBILITY_RTOL * r_tar.abs() {
                        violations.push(Violation {
                            constraint: Constraint::C3,
                            user: Some(z),
                            subchannel: Some(k),
                        });
                    }
                    total_rate += rate[z][k].max(0.0);
                }
            }
            (ServiceClass::Embb, Qos::Rate { target_bps }) => {
                let sum: f64 = scs.iter().map(|&k| rate[z][k]).sum();
                if sum < target_bps * lo {
                    violations.push(Violation {
                        constraint: Constraint::C4,
                        user: Some(z),
                        subchannel: None,
                    });
                }
                total_rate += scs.iter().map(|&k| rate[z][k].max(0.0)).sum::<f64>();
            }
            (
                ServiceClass::Mmtc,
                Qos::Packet {
                    bits,
                    latency_s,
                    error_prob,
                },
            ) => {
                if scs.len() != 1 {
                    violations.push(Violation {
                        constraint: Constraint::C2,
                        user: Some(z),
                        subchannel: None,
                    });
                }
                if scs.is_empty() {
                    violations.push(Violation {
                        constraint: Constraint::C5,
                        user: Some(z),
                        subchannel: None,
                    });
                }
                for &k in &scs {
                    let g_tar = target_snr(bits, latency_s, config.bandwidth(k), error_prob);
                    if gamma[z][k] < g_tar * lo {
                        violations.push(Violation {
                            constraint: Constraint::C5,
                            user: Some(z),
                            subchannel: Some(k),
                        });
                    } else {
                        total_rate += rate[z][k].max(0.0);
                    }
                }
            }
            _ => {
                return Err(ModelError::InvalidConfig(format!(
                    "user {z}: QoS does not match service"
                )))
            }
        }
        if state.user_power(z) > user.p_max_w * (1.0 + FEASIBILITY_RTOL) {
            violations.push(Violation {
                constraint: Constraint::C6,
                user: Some(z),
                subchannel: None,
            });
        }
    }
    violations.sort_by_key(|v| (v.constraint, v.user, v.subchannel));

    let total_power = state.total_power();
    let zeta = total_rate / (total_power + m as f64 * config.noise.circuit_power_w);
    Ok(Evaluation {
        sinr: gamma,
        rate,
        report: ConstraintReport { violations },
        total_rate,
        total_power,
        zeta,
    })
}

/// Evaluates (C1)-(C6) for one slot.
///
/// # Panics
/// If the state or channel dimensions disagree with `config`; use [`evaluate`]
/// for unchecked inputs.
pub fn check_constraints(
    state: &AllocationState,
    channels: &ChannelRealization,
    config: &NetworkConfig,
) -> ConstraintReport {
    evaluate(state, channels, config)
        .expect("allocation shape must match the network")
        .report
}

/// EE factor in bits/J. Same panics as [`check_constraints`].
pub fn ee_factor(state: &AllocationState, channels: &ChannelRealization, config: &NetworkConfig) -> f64 {
    evaluate(state, channels, config)
        .expect("allocation shape must match the network")
        .zeta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::ScenarioParams;

    fn cell() -> NetworkConfig {
        ScenarioParams::default().build(1).unwrap()
    }

    fn flat(cfg: &NetworkConfig, g: f64) -> ChannelRealization {
        ChannelRealization::from_rows(0, &vec![vec![g; cfg.n_subchannels()]; cfg.n_users()]).unwrap()
    }

    #[test]
    fn zero_power_without_mmtc_assignment_violates_c2_to_c5() {
        let cfg = cell();
        let ch = flat(&cfg, 1e-10);
        let state = AllocationState::with_grants(&cfg);
        let rep = check_constraints(&state, &ch, &cfg);
        for c in [Constraint::C2, Constraint::C3, Constraint::C4, Constraint::C5] {
            assert!(rep.violates(c), "{c} missing from {rep:?}");
        }
        assert!(!rep.violates(Constraint::C1));
        assert!(!rep.violates(Constraint::C6));
        assert_eq!(ee_factor(&state, &ch, &cfg), 0.0);
    }

    #[test]
    fn urllc_exactly_at_target_is_satisfied() {
        let params = ScenarioParams {
            embb_users: 0,
            mmtc_users: 0,
            embb_subchannels: 0,
            ..Default::default()
        };
        let cfg = params.build(2).unwrap();
        let g = 1e-11;
        let ch = ChannelRealization::from_rows(0, &[vec![g]]).unwrap();
        let gamma_tar = target_snr(256.0, 2e-3, 2880e3, 1e-5);
        let p = gamma_tar * cfg.noise_power(0) / g;
        let mut state = AllocationState::with_grants(&cfg);
        state.set_power(0, 0, p).unwrap();
        let rep = check_constraints(&state, &ch, &cfg);
        assert!(rep.satisfied(), "{rep:?}");
        let ev = evaluate(&state, &ch, &cfg).unwrap();
        assert!((ev.rate[0][0] - 128_000.0).abs() < 1e-3);
    }

    #[test]
    fn power_on_unassigned_pair_is_rejected() {
        let cfg = cell();
        let mut state = AllocationState::with_grants(&cfg);
        assert_eq!(
            state.set_power(3, 0, 0.1),
            Err(ModelError::UnassignedPower { user: 3, subchannel: 0 })
        );
        state.assign(3, 0);
        state.set_power(3, 0, 0.1).unwrap();
        state.unassign(3, 0);
        assert_eq!(state.power(3, 0), 0.0);
    }

    #[test]
    fn c1_and_c6_detected() {
        let cfg = cell();
        let ch = flat(&cfg, 1e-9);
        let mut state = AllocationState::with_grants(&cfg);
        state.assign(1, 0); // eMBB joins the URLLC subchannel
        state.set_power(1, 0, 0.15).unwrap();
        state.set_power(1, 1, 0.15).unwrap();
        let rep = check_constraints(&state, &ch, &cfg);
        assert!(rep.violates(Constraint::C1));
        assert!(rep.violations.contains(&Violation {
            constraint: Constraint::C6,
            user: Some(1),
            subchannel: None
        }));
    }

    #[test]
    fn ee_factor_arithmetic() {
        // R_tot = 1e6, P_tx = 0.1, M = 6, P_c = 0.05 -> 1e6 / 0.4
        let zeta: f64 = 1e6 / (0.1 + 6.0 * 0.05);
        assert!((zeta - 2.5e6).abs() < 1e-6);

        let cfg = cell();
        let ch = flat(&cfg, 1e-10);
        let mut state = AllocationState::with_grants(&cfg);
        state.set_power(0, 0, 0.05).unwrap();
        state.set_power(1, 1, 0.05).unwrap();
        let ev = evaluate(&state, &ch, &cfg).unwrap();
        let expect = ev.total_rate / (0.1 + 6.0 * 0.05);
        assert!((ev.zeta - expect).abs() < 1e-9 * expect);
        let n_u = cfg.noise_power(0);
        let n_e = cfg.noise_power(1);
        let r = rate_urllc(0.05 * 1e-10 / n_u, 2880e3, 2e-3, 1e-5) + rate_embb(0.05 * 1e-10 / n_e, 360e3);
        assert!((ev.total_rate - r).abs() < 1e-6 * r);
    }
}
