use serde::{Deserialize, Serialize};

use super::joint::{solve_subchannel, SicUser};
use super::{
    minimum_embb_power, optimize_embb_power, optimize_mmtc_power, optimize_urllc_power, DualConfig, PowerError,
};
use crate::system::{
    decoding_order, evaluate, target_snr, AllocationState, ChannelRealization, Evaluation, NetworkConfig, Qos,
    ServiceClass,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DinkelbachConfig {
    /// Stop when `|zeta_(q+1) - zeta_q| <= tolerance_rel * zeta_(q+1)`.
    pub tolerance_rel: f64,
    pub max_iterations: usize,
    pub inner: InnerSolver,
    pub dual: DualConfig,
}

impl Default for DinkelbachConfig {
    fn default() -> Self {
        Self {
            tolerance_rel: 1e-6,
            max_iterations: 200,
            inner: InnerSolver::Joint,
            dual: DualConfig::default(),
        }
    }
}

/// How each Dinkelbach subproblem is solved.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerSolver {
    /// Exact per-subchannel optimum (see [`solve_subchannel`]). Falls back to
    /// [`InnerSolver::Sequential`] when a grant-based user holds several
    /// subchannels, since those couple the subchannels.
    #[default]
    Joint,
    /// Per-user closed forms and dual solvers in reverse decoding order. Each
    /// user ignores the interference it adds to users decoded before it.
    Sequential,
}

/// One outer iteration: powers were solved at `zeta`, and produced `next_zeta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub zeta: f64,
    pub total_rate: f64,
    pub total_power: f64,
    pub next_zeta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerAllocation {
    pub state: AllocationState,
    /// EE factor of `state`.
    pub zeta: f64,
    /// Parameter the returned powers were solved at.
    pub solved_at: f64,
    pub evaluation: Evaluation,
    pub iterations: Vec<IterationRecord>,
    /// The last inner pass lowered the EE factor and was discarded.
    pub reverted: bool,
}

/// `R_tot - zeta * P_tx` for the given powers.
pub fn subtractive_objective(
    state: &AllocationState,
    channels: &ChannelRealization,
    config: &NetworkConfig,
    zeta: f64,
) -> Result<f64, PowerError> {
    let ev = evaluate(state, channels, config)?;
    Ok(ev.total_rate - zeta * ev.total_power)
}

/// `R_tot - zeta * (P_tx + M P_c)`, the parametric form whose root is the EE optimum.
pub fn dinkelbach_gap(
    state: &AllocationState,
    channels: &ChannelRealization,
    config: &NetworkConfig,
    zeta: f64,
) -> Result<f64, PowerError> {
    let ev = evaluate(state, channels, config)?;
    Ok(ev.total_rate - zeta * (ev.total_power + config.n_users() as f64 * config.noise.circuit_power_w))
}

fn check_assignment(assignment: &AllocationState, config: &NetworkConfig) -> Result<(), PowerError> {
    if assignment.n_users() != config.n_users() || assignment.n_subchannels() != config.n_subchannels() {
        return Err(PowerError::InvalidAssignment(
            "assignment shape does not match the network".into(),
        ));
    }
    for z in config.mmtc_users() {
        let n = assignment.subchannels_of(z).len();
        if n != 1 {
            return Err(PowerError::InvalidAssignment(format!(
                "mMTC user {z} holds {n} subchannels"
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Rule<'a> {
    /// Maximize `R - zeta P` per user.
    Parametric { zeta: f64, dual: &'a DualConfig },
    /// Least power meeting each QoS demand.
    Minimum,
}

/// One inner pass at fixed `zeta`: powers are set subchannel by subchannel in
/// reverse decoding order, so each user sees final interference from everyone
/// decoded after it. A grant-based user waits until every one of its
/// subchannels has reached it.
pub fn solve_powers(
    assignment: &AllocationState,
    channels: &ChannelRealization,
    config: &NetworkConfig,
    zeta: f64,
    dual: &DualConfig,
) -> Result<AllocationState, PowerError> {
    reverse_pass(assignment, channels, config, Rule::Parametric { zeta, dual })
}

/// Same walk as [`solve_powers`], but every user transmits the least power that
/// meets its own demand given the interference it sees.
pub fn minimum_powers(
    assignment: &AllocationState,
    channels: &ChannelRealization,
    config: &NetworkConfig,
) -> Result<AllocationState, PowerError> {
    reverse_pass(assignment, channels, config, Rule::Minimum)
}

fn user_powers(
    z: usize,
    gains: &[f64],
    w: f64,
    config: &NetworkConfig,
    rule: Rule<'_>,
) -> Result<Vec<f64>, PowerError> {
    let user = &config.users[z];
    let p_max = user.p_max_w;
    let out = match (user.service, user.qos, rule) {
        (
            ServiceClass::Mmtc | ServiceClass::Urllc,
            Qos::Packet {
                bits,
                latency_s,
                error_prob,
            },
            Rule::Minimum,
        ) => {
            let g = target_snr(bits, latency_s, w, error_prob);
            let floors: Vec<f64> = gains.iter().map(|a| g / a).collect();
            let total: f64 = floors.iter().sum();
            if total > p_max * (1.0 + 1e-12) {
                return Err(PowerError::infeasible(format!(
                    "SINR floors need {total:.4e} W, budget is {p_max:.4e} W"
                )));
            }
            Ok(floors)
        }
        (
            ServiceClass::Mmtc,
            Qos::Packet {
                bits,
                latency_s,
                error_prob,
            },
            Rule::Parametric { zeta, .. },
        ) => {
            let g = target_snr(bits, latency_s, w, error_prob);
            optimize_mmtc_power(gains[0], g, p_max, zeta, w).map(|p| vec![p])
        }
        (
            ServiceClass::Urllc,
            Qos::Packet {
                bits,
                latency_s,
                error_prob,
            },
            Rule::Parametric { zeta, dual },
        ) => {
            let g = target_snr(bits, latency_s, w, error_prob);
            optimize_urllc_power(gains, g, p_max, zeta, w, dual).map(|s| s.powers)
        }
        (ServiceClass::Embb, Qos::Rate { target_bps }, Rule::Minimum) => {
            minimum_embb_power(gains, target_bps, p_max, w)
        }
        (ServiceClass::Embb, Qos::Rate { target_bps }, Rule::Parametric { zeta, dual }) => {
            optimize_embb_power(gains, target_bps, p_max, zeta, w, dual).map(|s| s.powers)
        }
        (s, q, _) => {
            return Err(PowerError::InvalidAssignment(format!(
                "user {z}: service {s:?} does not match QoS {q:?}"
            )))
        }
    };
    out.map_err(|e| e.for_user(z))
}

fn reverse_pass(
    assignment: &AllocationState,
    channels: &ChannelRealization,
    config: &NetworkConfig,
    rule: Rule<'_>,
) -> Result<AllocationState, PowerError> {
    check_assignment(assignment, config)?;
    let k_n = config.n_subchannels();
    let mut orders = Vec::with_capacity(k_n);
    for k in 0..k_n {
        orders.push(decoding_order(&assignment.members(k), k, config, channels)?);
    }
    let mut cursor: Vec<usize> = orders.iter().map(Vec::len).collect();
    let mut interference = vec![0.0; k_n];
    let mut state = AllocationState::new(config.n_users(), k_n);
    for (k, order) in orders.iter().enumerate() {
        for &z in order {
            state.assign(z, k);
        }
    }

    loop {
        let mut progress = false;
        for k in 0..k_n {
            while cursor[k] > 0 {
                let z = orders[k][cursor[k] - 1];
                let scs = assignment.subchannels_of(z);
                if scs.iter().any(|&j| cursor[j] == 0 || orders[j][cursor[j] - 1] != z) {
                    break;
                }
                let gains: Vec<f64> = scs
                    .iter()
                    .map(|&j| channels.gain(z, j) / (config.noise_power(j) + interference[j]))
                    .collect();
                let powers = user_powers(z, &gains, config.bandwidth(scs[0]), config, rule)?;
                for (&j, &p) in scs.iter().zip(&powers) {
                    state.set_power(z, j, p)?;
                    interference[j] += p * channels.gain(z, j);
                    cursor[j] -= 1;
                }
                progress = true;
            }
        }
        if cursor.iter().all(|&c| c == 0) {
            return Ok(state);
        }
        if !progress {
            return Err(PowerError::InvalidAssignment(
                "grant-based users block each other's decoding order".into(),
            ));
        }
    }
}

/// SINR a user must reach on subchannel `k`. For eMBB this is the single-subchannel
/// equivalent of its rate demand.
fn sinr_floor(config: &NetworkConfig, z: usize, k: usize) -> f64 {
    let w = config.bandwidth(k);
    match config.users[z].qos {
        Qos::Packet {
            bits,
            latency_s,
            error_prob,
        } => target_snr(bits, latency_s, w, error_prob),
        Qos::Rate { target_bps } => (target_bps / w).exp2() - 1.0,
    }
}

fn needs_sequential(assignment: &AllocationState, config: &NetworkConfig) -> bool {
    config
        .users
        .iter()
        .any(|u| u.service.is_grant_based() && assignment.subchannels_of(u.id).len() > 1)
}

/// Exact subproblem at `zeta`, one subchannel at a time.
fn joint_pass(
    assignment: &AllocationState,
    channels: &ChannelRealization,
    config: &NetworkConfig,
    zeta: f64,
) -> Result<AllocationState, PowerError> {
    check_assignment(assignment, config)?;
    let mut state = AllocationState::new(config.n_users(), config.n_subchannels());
    for k in 0..config.n_subchannels() {
        let order = decoding_order(&assignment.members(k), k, config, channels)?;
        let users: Vec<SicUser> = order
            .iter()
            .map(|&z| SicUser {
                gain: channels.gain(z, k),
                p_max: config.users[z].p_max_w,
                floor: sinr_floor(config, z, k),
            })
            .collect();
        let powers = solve_subchannel(&users, config.noise_power(k), config.bandwidth(k), zeta).ok_or_else(|| {
            PowerError::infeasible(format!(
                "no powers on subchannel {k} meet every SINR floor within budget"
            ))
        })?;
        for (&z, p) in order.iter().zip(powers) {
            state.assign(z, k);
            state.set_power(z, k, p)?;
        }
    }
    Ok(state)
}

fn feasible_evaluation(
    state: &AllocationState,
    channels: &ChannelRealization,
    config: &NetworkConfig,
) -> Result<Evaluation, PowerError> {
    let ev = evaluate(state, channels, config)?;
    match ev.report.violations.first() {
        Some(v) => Err(PowerError::Infeasible {
            user: v.user,
            detail: format!("constraint {} fails after power allocation", v.constraint),
        }),
        None => Ok(ev),
    }
}

/// Dinkelbach iteration on the EE ratio for a fixed subchannel assignment.
///
/// Starts from `zeta = 0`; each pass solves the subtractive subproblem and
/// updates `zeta` to the EE factor of the result. The sequential pass is not
/// an exact subproblem solution, so two guards apply: a pass that lowers
/// `zeta` or breaks a constraint is discarded in favour of the previous
/// iterate, and if the very first pass is infeasible the iteration restarts
/// from [`minimum_powers`]. With the joint pass neither guard fires.
pub fn dinkelbach_allocate(
    assignment: &AllocationState,
    channels: &ChannelRealization,
    config: &NetworkConfig,
    cfg: &DinkelbachConfig,
) -> Result<PowerAllocation, PowerError> {
    let mut zeta = 0.0;
    let mut iterations = Vec::new();
    let mut best: Option<(AllocationState, Evaluation, f64)> = None;
    let joint = cfg.inner == InnerSolver::Joint && !needs_sequential(assignment, config);
    for _ in 0..cfg.max_iterations {
        let pass = if joint {
            joint_pass(assignment, channels, config, zeta)
        } else {
            solve_powers(assignment, channels, config, zeta, &cfg.dual)
        };
        let attempt = pass.and_then(|state| feasible_evaluation(&state, channels, config).map(|ev| (state, ev)));
        let (state, ev) = match (attempt, best.take()) {
            (Ok(pair), prev) => {
                best = prev;
                pair
            }
            (Err(PowerError::Infeasible { .. }), Some((state, evaluation, solved_at))) => {
                return Ok(PowerAllocation {
                    state,
                    zeta,
                    solved_at,
                    evaluation,
                    iterations,
                    reverted: true,
                });
            }
            (Err(PowerError::Infeasible { .. }), None) if iterations.is_empty() => {
                let state = minimum_powers(assignment, channels, config)?;
                let ev = feasible_evaluation(&state, channels, config)?;
                iterations.push(IterationRecord {
                    zeta,
                    total_rate: ev.total_rate,
                    total_power: ev.total_power,
                    next_zeta: ev.zeta,
                });
                zeta = ev.zeta;
                best = Some((state, ev, 0.0));
                continue;
            }
            (Err(e), _) => return Err(e),
        };
        let next = ev.zeta;
        iterations.push(IterationRecord {
            zeta,
            total_rate: ev.total_rate,
            total_power: ev.total_power,
            next_zeta: next,
        });
        if next < zeta {
            let (state, evaluation, solved_at) = best.expect("zeta > 0 implies an earlier iterate");
            return Ok(PowerAllocation {
                state,
                zeta,
                solved_at,
                evaluation,
                iterations,
                reverted: true,
            });
        }
        if next - zeta <= cfg.tolerance_rel * next {
            return Ok(PowerAllocation {
                state,
                zeta: next,
                solved_at: zeta,
                evaluation: ev,
                iterations,
                reverted: false,
            });
        }
        best = Some((state, ev, zeta));
        zeta = next;
    }
    Err(PowerError::NotConverged {
        iterations: cfg.max_iterations,
        last_zeta: zeta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{ee_factor, ScenarioParams};

    /// One URLLC, one eMBB and `m` mMTC users over two subchannels.
    fn cell(m: usize) -> NetworkConfig {
        ScenarioParams {
            mmtc_users: m,
            ..Default::default()
        }
        .build(7)
        .unwrap()
    }

    fn flat(cfg: &NetworkConfig, g: f64) -> ChannelRealization {
        ChannelRealization::from_rows(0, &vec![vec![g; cfg.n_subchannels()]; cfg.n_users()]).unwrap()
    }

    fn isolated_mmtc() -> (NetworkConfig, AllocationState) {
        // drop the grant-based users' subchannels so only one mMTC user remains active
        let mut cfg = cell(1);
        cfg.users.truncate(3);
        let mut cfg1 = cfg.clone();
        cfg1.users = vec![cfg.users[2].clone()];
        cfg1.users[0].id = 0;
        cfg1.grants.clear();
        let mut a = AllocationState::new(1, cfg1.n_subchannels());
        a.assign(0, 1);
        (cfg1, a)
    }

    #[test]
    fn single_mmtc_user_matches_grid() {
        let (cfg, a) = isolated_mmtc();
        let ch = flat(&cfg, 1e-11);
        let out = dinkelbach_allocate(&a, &ch, &cfg, &DinkelbachConfig::default()).unwrap();
        let pmax = cfg.users[0].p_max_w;
        let mut best = 0.0f64;
        for i in 1..=20_000 {
            let mut s = a.clone();
            s.set_power(0, 1, pmax * i as f64 / 20_000.0).unwrap();
            let rep = crate::system::check_constraints(&s, &ch, &cfg);
            if rep.satisfied() {
                best = best.max(ee_factor(&s, &ch, &cfg));
            }
        }
        assert!(out.zeta >= best * 0.995, "{} vs {best}", out.zeta);
        assert!((out.zeta - ee_factor(&out.state, &ch, &cfg)).abs() < 1e-9 * out.zeta);
    }

    #[test]
    fn zeta_is_nondecreasing_and_gap_closes() {
        let cfg = cell(2);
        let ch = flat(&cfg, 2e-11);
        let mut a = AllocationState::with_grants(&cfg);
        a.assign(2, 0);
        a.assign(3, 1);
        let dk = DinkelbachConfig::default();
        let out = dinkelbach_allocate(&a, &ch, &cfg, &dk).unwrap();
        for w in out.iterations.windows(2) {
            assert!(w[1].zeta >= w[0].zeta);
        }
        assert_eq!(out.iterations[0].zeta, 0.0);
        let denom = out.evaluation.total_power + cfg.n_users() as f64 * cfg.noise.circuit_power_w;
        let gap = dinkelbach_gap(&out.state, &ch, &cfg, out.solved_at).unwrap();
        assert!(gap.abs() <= dk.tolerance_rel * out.zeta * denom + 1e-6, "gap {gap}");
    }

    #[test]
    fn subtractive_objective_examples() {
        let cfg = cell(1);
        let ch = flat(&cfg, 1e-11);
        let mut s = AllocationState::with_grants(&cfg);
        s.assign(2, 1);
        s.set_power(0, 0, 0.1).unwrap();
        s.set_power(1, 1, 0.05).unwrap();
        s.set_power(2, 1, 0.02).unwrap();
        let ev = evaluate(&s, &ch, &cfg).unwrap();
        assert_eq!(subtractive_objective(&s, &ch, &cfg, 0.0).unwrap(), ev.total_rate);
        let root = ev.total_rate / ev.total_power;
        assert!(subtractive_objective(&s, &ch, &cfg, root).unwrap().abs() < 1e-6 * ev.total_rate);
        let z = 3.3e6;
        let expect = ev.total_rate - z * (0.1 + 0.05 + 0.02);
        assert!((subtractive_objective(&s, &ch, &cfg, z).unwrap() - expect).abs() < 1e-6 * ev.total_rate);
    }

    #[test]
    fn unreachable_target_is_infeasible() {
        let cfg = cell(1);
        let ch = flat(&cfg, 1e-20);
        let mut a = AllocationState::with_grants(&cfg);
        a.assign(2, 1);
        let err = dinkelbach_allocate(&a, &ch, &cfg, &DinkelbachConfig::default()).unwrap_err();
        assert!(matches!(err, PowerError::Infeasible { .. }), "{err:?}");
    }

    #[test]
    fn mmtc_without_subchannel_is_rejected() {
        let cfg = cell(1);
        let a = AllocationState::with_grants(&cfg);
        let err = solve_powers(&a, &flat(&cfg, 1e-11), &cfg, 0.0, &DualConfig::default()).unwrap_err();
        assert!(matches!(err, PowerError::InvalidAssignment(_)));
    }

    #[test]
    fn zero_zeta_pass_spends_mmtc_budget() {
        let cfg = cell(1);
        let mut rows = vec![vec![1e-11; 2]; 3];
        rows[2][1] = 1e-13; // weak, decoded after the eMBB user
        let ch = ChannelRealization::from_rows(0, &rows).unwrap();
        let mut a = AllocationState::with_grants(&cfg);
        a.assign(2, 1);
        let s = solve_powers(&a, &ch, &cfg, 0.0, &DualConfig::default()).unwrap();
        assert_eq!(s.power(2, 1), cfg.users[2].p_max_w);
    }

    #[test]
    fn sequential_first_pass_falls_back_to_minimum_powers() {
        // at zeta = 0 the mMTC user's full budget drowns the eMBB user on its subchannel
        let cfg = cell(2);
        let ch = flat(&cfg, 2e-11);
        let mut a = AllocationState::with_grants(&cfg);
        a.assign(2, 0);
        a.assign(3, 1);
        assert!(solve_powers(&a, &ch, &cfg, 0.0, &DualConfig::default()).is_err());
        let dk = DinkelbachConfig {
            inner: InnerSolver::Sequential,
            ..Default::default()
        };
        let out = dinkelbach_allocate(&a, &ch, &cfg, &dk).unwrap();
        assert!(out.evaluation.report.satisfied());
        let floor = minimum_powers(&a, &ch, &cfg).unwrap();
        assert!(out.zeta >= ee_factor(&floor, &ch, &cfg));
        for w in out.iterations.windows(2) {
            assert!(w[1].zeta >= w[0].zeta);
        }
    }

    #[test]
    fn joint_pass_reaches_at_least_sequential() {
        let cfg = cell(2);
        let ch = generate_channels_for_test(&cfg);
        let mut a = AllocationState::with_grants(&cfg);
        a.assign(2, 1);
        a.assign(3, 1);
        let joint = dinkelbach_allocate(&a, &ch, &cfg, &DinkelbachConfig::default()).unwrap();
        let seq = DinkelbachConfig {
            inner: InnerSolver::Sequential,
            ..Default::default()
        };
        if let Ok(seq) = dinkelbach_allocate(&a, &ch, &cfg, &seq) {
            assert!(joint.zeta >= seq.zeta * (1.0 - 1e-9));
        }
        assert!(!joint.reverted);
    }

    fn generate_channels_for_test(cfg: &NetworkConfig) -> ChannelRealization {
        crate::system::generate_channels(cfg, 11, 0)
    }
}
