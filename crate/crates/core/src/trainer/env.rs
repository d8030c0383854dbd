use serde::{Deserialize, Serialize};

use super::TrainerError;
use crate::agents::Selection;
use crate::power::{dinkelbach_allocate, minimum_embb_power, DinkelbachConfig, PowerError};
use crate::system::{
    decoding_order, evaluate, target_snr, AllocationState, ChannelRealization, Evaluation, NetworkConfig, Qos,
};

/// Why a slot earned nothing without a constraint report to show for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotFlag {
    /// The optimizer found no feasible power vector for the chosen subchannels.
    Infeasible,
    /// The optimizer hit its iteration cap.
    NotConverged,
}

#[derive(Debug, Clone)]
pub struct TimeslotOutcome {
    pub state: AllocationState,
    /// Evaluation of `state`; `None` when the optimizer failed outright.
    pub evaluation: Option<Evaluation>,
    pub reward: f64,
    /// EE factor of `state` whether or not it is feasible.
    pub zeta: f64,
    pub flag: Option<SlotFlag>,
    /// Dinkelbach iterations spent on this slot; zero for quantized schemes.
    pub iterations: usize,
}

impl TimeslotOutcome {
    pub fn is_clean(&self) -> bool {
        self.evaluation.as_ref().is_some_and(|e| e.report.satisfied())
    }

    /// What each mMTC agent ended up doing, in `config.mmtc_users()` order.
    pub fn selections(&self, agents: &[usize], subchannels: &[usize]) -> Vec<Selection> {
        agents
            .iter()
            .zip(subchannels)
            .map(|(&z, &k)| Selection {
                subchannel: k,
                power_w: self.state.power(z, k),
            })
            .collect()
    }
}

/// Shared reward: the EE factor when every constraint holds, zero otherwise.
pub fn compute_reward(evaluation: &Evaluation) -> f64 {
    if evaluation.report.satisfied() {
        evaluation.zeta
    } else {
        0.0
    }
}

/// Gives every grant-based user the least power meeting its own demand given
/// the powers already set for everyone else on its subchannels. A demand that
/// would exceed `P_max` is capped there and left to fail in evaluation.
pub fn grant_based_minimum(
    state: &mut AllocationState,
    channels: &ChannelRealization,
    config: &NetworkConfig,
) -> Result<(), TrainerError> {
    for user in config.users.iter().filter(|u| u.service.is_grant_based()) {
        let z = user.id;
        let scs = state.subchannels_of(z);
        if scs.is_empty() {
            continue;
        }
        let mut gains = Vec::with_capacity(scs.len());
        for &k in &scs {
            let order = decoding_order(&state.members(k), k, config, channels)?;
            let pos = order
                .iter()
                .position(|&u| u == z)
                .expect("assigned user is in the order");
            let interference: f64 = order[pos + 1..]
                .iter()
                .map(|&u| state.power(u, k) * channels.gain(u, k))
                .sum();
            gains.push(channels.gain(z, k) / (interference + config.noise_power(k)));
        }
        let w = config.bandwidth(scs[0]);
        let powers = match user.qos {
            Qos::Packet {
                bits,
                latency_s,
                error_prob,
            } => {
                let g = target_snr(bits, latency_s, w, error_prob);
                gains.iter().map(|a| g / a).collect::<Vec<_>>()
            }
            Qos::Rate { target_bps } => match minimum_embb_power(&gains, target_bps, user.p_max_w, w) {
                Ok(p) => p,
                Err(_) => {
                    // even split of the demand, scaled down to the budget below
                    let g = (target_bps / (w * scs.len() as f64)).exp2() - 1.0;
                    gains.iter().map(|a| g / a).collect()
                }
            },
        };
        let total: f64 = powers.iter().sum();
        let scale = if total > user.p_max_w {
            user.p_max_w / total
        } else {
            1.0
        };
        for (&k, p) in scs.iter().zip(powers) {
            state.set_power(z, k, p * scale)?;
        }
    }
    Ok(())
}

fn grants_plus(
    config: &NetworkConfig,
    agents: &[usize],
    subchannels: &[usize],
) -> Result<AllocationState, TrainerError> {
    if agents.len() != subchannels.len() {
        return Err(TrainerError::InvalidConfig(format!(
            "{} actions for {} mMTC agents",
            subchannels.len(),
            agents.len()
        )));
    }
    let mut state = AllocationState::with_grants(config);
    for (&z, &k) in agents.iter().zip(subchannels) {
        if k >= config.n_subchannels() {
            return Err(TrainerError::InvalidConfig(format!("subchannel {k} does not exist")));
        }
        state.assign(z, k);
    }
    Ok(state)
}

/// Quantized-power step: each mMTC agent transmits `selection.power_w` on its
/// subchannel, grant-based users take their minimum power.
pub fn apply_actions_fullmad(
    selections: &[Selection],
    channels: &ChannelRealization,
    config: &NetworkConfig,
) -> Result<TimeslotOutcome, TrainerError> {
    let agents = config.mmtc_users();
    let subchannels: Vec<usize> = selections.iter().map(|s| s.subchannel).collect();
    let mut state = grants_plus(config, &agents, &subchannels)?;
    for (&z, s) in agents.iter().zip(selections) {
        state.set_power(z, s.subchannel, s.power_w.clamp(0.0, config.users[z].p_max_w))?;
    }
    grant_based_minimum(&mut state, channels, config)?;
    let ev = evaluate(&state, channels, config)?;
    Ok(TimeslotOutcome {
        reward: compute_reward(&ev),
        zeta: ev.zeta,
        evaluation: Some(ev),
        state,
        flag: None,
        iterations: 0,
    })
}

/// Subchannel-only step: powers of everyone come from the Dinkelbach optimizer.
pub fn apply_actions_homad(
    subchannels: &[usize],
    channels: &ChannelRealization,
    config: &NetworkConfig,
    power: &DinkelbachConfig,
) -> Result<TimeslotOutcome, TrainerError> {
    let agents = config.mmtc_users();
    let state = grants_plus(config, &agents, subchannels)?;
    let failed = |state: AllocationState, flag, iterations| TimeslotOutcome {
        state,
        evaluation: None,
        reward: 0.0,
        zeta: 0.0,
        flag: Some(flag),
        iterations,
    };
    Ok(match dinkelbach_allocate(&state, channels, config, power) {
        Ok(alloc) => TimeslotOutcome {
            reward: compute_reward(&alloc.evaluation),
            zeta: alloc.evaluation.zeta,
            evaluation: Some(alloc.evaluation),
            state: alloc.state,
            flag: None,
            iterations: alloc.iterations.len(),
        },
        Err(PowerError::Infeasible { .. }) => failed(state, SlotFlag::Infeasible, 0),
        Err(PowerError::NotConverged { iterations, .. }) => failed(state, SlotFlag::NotConverged, iterations),
        Err(PowerError::Model(e)) => return Err(e.into()),
        Err(PowerError::InvalidAssignment(m)) => return Err(TrainerError::InvalidConfig(m)),
    })
}
