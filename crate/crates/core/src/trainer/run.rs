use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{apply_actions_fullmad, apply_actions_homad, detect_convergence, Scheme, SlotFlag, TrainerError};
use crate::agents::{
    power_levels, select_action, ActionSpace, DqnAgent, DqnConfig, EpsilonSchedule, Experience, GainBins, QTable,
    Selection, StateEncoder, TabularConfig,
};
use crate::nn::NetworkParams;
use crate::power::DinkelbachConfig;
use crate::system::{generate_channels, NetworkConfig};

/// RNG stream offset for per-agent generators; channel draws use streams `t + 1`.
const AGENT_STREAM: u64 = 1 << 62;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub episodes: usize,
    pub timeslots: usize,
    /// Target networks are synced every this many time slots.
    pub target_sync: usize,
    pub seed: u64,
    pub epsilon: EpsilonSchedule,
    pub dqn: DqnConfig,
    pub tabular: TabularConfig,
    pub power: DinkelbachConfig,
    /// Span of the quantized power levels below `P_max`, dB.
    pub power_range_db: f64,
    /// Channel draws used to place the tabular gain bins.
    pub calibration_slots: usize,
    /// Window and relative tolerance of the convergence detector.
    pub convergence_window: usize,
    pub convergence_tol: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            episodes: 200,
            timeslots: 100,
            target_sync: 100,
            seed: 0,
            epsilon: EpsilonSchedule::default(),
            dqn: DqnConfig::default(),
            tabular: TabularConfig::default(),
            power: DinkelbachConfig::default(),
            power_range_db: 20.0,
            calibration_slots: 256,
            convergence_window: 10,
            convergence_tol: 0.05,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        let bad = |m: &str| Err(TrainerError::InvalidConfig(m.into()));
        if self.episodes == 0 || self.timeslots == 0 || self.target_sync == 0 {
            return bad("episodes, timeslots and target_sync must be at least 1");
        }
        if self.dqn.batch_size == 0 || self.dqn.replay_capacity < self.dqn.batch_size {
            return bad("replay capacity must hold at least one minibatch");
        }
        if !(0.0..=1.0).contains(&self.epsilon.start) || !(0.0..=1.0).contains(&self.epsilon.floor) {
            return bad("epsilon values must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// 1-based.
    pub episode: usize,
    pub epsilon: f64,
    pub mean_reward: f64,
    /// Mean EE factor over the episode's slots, feasible or not.
    pub mean_zeta: f64,
    /// Fraction of slots with a violated constraint or failed optimizer.
    pub violation_rate: f64,
    /// Mean training loss per agent; `None` before the first minibatch.
    pub mean_loss: Vec<Option<f64>>,
}

/// Everything about a run that is a pure function of its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub scheme: Scheme,
    pub seed: u64,
    pub episodes: Vec<EpisodeRecord>,
    pub target_syncs: u64,
    pub rejected_steps: u64,
    pub optimizer_failures: u64,
    pub experiences: Vec<usize>,
    pub convergence_episode: Option<usize>,
    /// Mean reward over the final convergence window.
    pub final_reward: f64,
}

impl TrainingLog {
    pub fn rewards(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.mean_reward).collect()
    }
}

#[derive(Debug, Clone)]
pub enum TrainedModels {
    Dqn(Vec<NetworkParams>),
    Tabular(Vec<QTable>),
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub log: TrainingLog,
    pub models: TrainedModels,
    /// Wall time of each episode, seconds.
    pub episode_seconds: Vec<f64>,
}

enum Learner {
    Dqn(DqnAgent),
    Tabular { table: QTable, bins: GainBins },
}

struct Agent {
    user: usize,
    learner: Learner,
    encoder: StateEncoder,
    levels: Vec<f64>,
    rng: ChaCha8Rng,
    loss_sum: f64,
    loss_count: usize,
}

impl Agent {
    fn observe(&self, gains: &[f64], prev: Option<Selection>, prev_action: Option<usize>) -> Observation {
        match &self.learner {
            Learner::Dqn(_) => Observation::Vector(self.encoder.encode(gains, prev)),
            Learner::Tabular { bins, .. } => Observation::Key(bins.key(gains, prev_action)),
        }
    }

    fn act(&mut self, obs: &Observation, epsilon: f64) -> Result<usize, TrainerError> {
        Ok(match (&self.learner, obs) {
            (Learner::Dqn(a), Observation::Vector(s)) => a.act(s, epsilon, &mut self.rng)?,
            (Learner::Tabular { table, .. }, Observation::Key(k)) => {
                select_action(&table.values(k), epsilon, &mut self.rng)
            }
            _ => unreachable!("observation kind follows the learner"),
        })
    }
}

enum Observation {
    Vector(Vec<f64>),
    Key(Vec<u16>),
}

/// Runs the episode/time-slot training loop for every mMTC agent of `config`.
pub fn run_training(config: &NetworkConfig, scheme: Scheme, cfg: &TrainingConfig) -> Result<TrainingRun, TrainerError> {
    cfg.validate()?;
    config.validate()?;
    let k_n = config.n_subchannels();
    let users = config.mmtc_users();
    if users.is_empty() {
        return Err(TrainerError::InvalidConfig("no mMTC agents to train".into()));
    }
    let space = ActionSpace {
        mode: scheme.action_mode(),
        n_subchannels: k_n,
    };

    let calibration: Vec<_> = if scheme.is_tabular() {
        (0..cfg.calibration_slots.max(1) as u64)
            .map(|t| generate_channels(config, cfg.seed ^ 0x5eed, t))
            .collect()
    } else {
        Vec::new()
    };
    let mut agents = Vec::with_capacity(users.len());
    for (m, &z) in users.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(AGENT_STREAM + m as u64);
        let p_max = config.users[z].p_max_w;
        let encoder = StateEncoder::new(k_n, p_max);
        let learner = if scheme.is_tabular() {
            let rows: Vec<Vec<f64>> = calibration.iter().map(|c| c.row(z).to_vec()).collect();
            Learner::Tabular {
                table: QTable::new(space.size()),
                bins: GainBins::from_samples(&rows),
            }
        } else {
            Learner::Dqn(DqnAgent::new(encoder.len(), space.size(), cfg.dqn.clone(), &mut rng)?)
        };
        let levels = match scheme {
            Scheme::Homad => Vec::new(),
            Scheme::FullMad { levels } | Scheme::FullMaql { levels } => power_levels(p_max, levels, cfg.power_range_db),
        };
        agents.push(Agent {
            user: z,
            learner,
            encoder,
            levels,
            rng,
            loss_sum: 0.0,
            loss_count: 0,
        });
    }

    let mut episodes = Vec::with_capacity(cfg.episodes);
    let mut episode_seconds = Vec::with_capacity(cfg.episodes);
    let (mut syncs, mut failures) = (0u64, 0u64);
    let mut global_t: u64 = 0;
    let mut channels = generate_channels(config, cfg.seed, 0);

    for ep in 0..cfg.episodes {
        let started = Instant::now();
        let epsilon = cfg.epsilon.value(ep);
        let mut prev: Vec<Option<Selection>> = vec![None; agents.len()];
        let mut prev_action: Vec<Option<usize>> = vec![None; agents.len()];
        let (mut reward_sum, mut zeta_sum, mut violations) = (0.0, 0.0, 0usize);
        for a in &mut agents {
            a.loss_sum = 0.0;
            a.loss_count = 0;
        }

        for _ in 0..cfg.timeslots {
            let mut observations = Vec::with_capacity(agents.len());
            let mut actions = Vec::with_capacity(agents.len());
            for (m, a) in agents.iter_mut().enumerate() {
                let obs = a.observe(channels.row(a.user), prev[m], prev_action[m]);
                actions.push(a.act(&obs, epsilon)?);
                observations.push(obs);
            }
            let decoded = actions
                .iter()
                .map(|&i| space.decode(i))
                .collect::<Result<Vec<_>, _>>()?;
            let subchannels: Vec<usize> = decoded.iter().map(|d| d.subchannel).collect();
            let outcome = match scheme {
                Scheme::Homad => apply_actions_homad(&subchannels, &channels, config, &cfg.power)?,
                _ => {
                    let sel: Vec<Selection> = decoded
                        .iter()
                        .zip(&agents)
                        .map(|(d, a)| Selection {
                            subchannel: d.subchannel,
                            power_w: a.levels[d.level.expect("joint actions carry a level")],
                        })
                        .collect();
                    apply_actions_fullmad(&sel, &channels, config)?
                }
            };
            if !outcome.is_clean() {
                violations += 1;
            }
            if matches!(outcome.flag, Some(SlotFlag::Infeasible | SlotFlag::NotConverged)) {
                failures += 1;
            }
            reward_sum += outcome.reward;
            zeta_sum += outcome.zeta;
            let chosen = outcome.selections(&users, &subchannels);

            let next_channels = generate_channels(config, cfg.seed, global_t + 1);
            for (m, a) in agents.iter_mut().enumerate() {
                let next = a.observe(next_channels.row(a.user), Some(chosen[m]), Some(actions[m]));
                let obs = std::mem::replace(&mut observations[m], Observation::Key(Vec::new()));
                match (&mut a.learner, obs, next) {
                    (Learner::Dqn(agent), Observation::Vector(state), Observation::Vector(next_state)) => {
                        agent.remember(Experience {
                            state,
                            action: actions[m],
                            reward: outcome.reward,
                            next_state,
                        });
                        match agent.learn(&mut a.rng) {
                            Ok(Some(loss)) => {
                                a.loss_sum += loss;
                                a.loss_count += 1;
                            }
                            Ok(None) => {}
                            // rejected steps are counted inside the agent
                            Err(crate::agents::AgentError::Rejected(_)) => {}
                            Err(e) => return Err(e.into()),
                        }
                    }
                    (Learner::Tabular { table, .. }, Observation::Key(s), Observation::Key(s2)) => {
                        let r = cfg.tabular.reward_scale * outcome.reward;
                        table.update(&s, actions[m], r, &s2, cfg.tabular.alpha, cfg.tabular.discount);
                    }
                    _ => unreachable!("observation kind follows the learner"),
                }
            }
            global_t += 1;
            if global_t % cfg.target_sync as u64 == 0 {
                for a in &mut agents {
                    if let Learner::Dqn(agent) = &mut a.learner {
                        agent.sync_target();
                    }
                }
                if !scheme.is_tabular() {
                    syncs += 1;
                }
            }
            for (m, s) in chosen.into_iter().enumerate() {
                prev[m] = Some(s);
                prev_action[m] = Some(actions[m]);
            }
            channels = next_channels;
        }

        let t = cfg.timeslots as f64;
        episodes.push(EpisodeRecord {
            episode: ep + 1,
            epsilon,
            mean_reward: reward_sum / t,
            mean_zeta: zeta_sum / t,
            violation_rate: violations as f64 / t,
            mean_loss: agents
                .iter()
                .map(|a| (a.loss_count > 0).then(|| a.loss_sum / a.loss_count as f64))
                .collect(),
        });
        episode_seconds.push(started.elapsed().as_secs_f64());
    }

    let rewards: Vec<f64> = episodes.iter().map(|e| e.mean_reward).collect();
    let mut rejected = 0;
    let mut experiences = Vec::with_capacity(agents.len());
    for a in &agents {
        match &a.learner {
            Learner::Dqn(agent) => {
                rejected += agent.rejected_steps();
                experiences.push(agent.memory().len());
            }
            Learner::Tabular { .. } => experiences.push(0),
        }
    }
    let log = TrainingLog {
        scheme,
        seed: cfg.seed,
        convergence_episode: detect_convergence(&rewards, cfg.convergence_window, cfg.convergence_tol),
        final_reward: super::final_window_mean(&rewards, cfg.convergence_window),
        episodes,
        target_syncs: syncs,
        rejected_steps: rejected,
        optimizer_failures: failures,
        experiences,
    };
    let models = if scheme.is_tabular() {
        TrainedModels::Tabular(
            agents
                .into_iter()
                .map(|a| match a.learner {
                    Learner::Tabular { table, .. } => table,
                    Learner::Dqn(_) => unreachable!(),
                })
                .collect(),
        )
    } else {
        TrainedModels::Dqn(
            agents
                .into_iter()
                .map(|a| match a.learner {
                    Learner::Dqn(agent) => agent.online().clone(),
                    Learner::Tabular { .. } => unreachable!(),
                })
                .collect(),
        )
    };
    Ok(TrainingRun {
        log,
        models,
        episode_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::ScenarioParams;

    fn tiny(episodes: usize, timeslots: usize) -> TrainingConfig {
        let mut cfg = TrainingConfig {
            episodes,
            timeslots,
            target_sync: 7,
            seed: 11,
            ..Default::default()
        };
        cfg.dqn.hidden = vec![16, 8];
        cfg.dqn.batch_size = 8;
        cfg
    }

    #[test]
    fn one_slot_stores_one_experience_per_agent() {
        let net = ScenarioParams::default().build(1).unwrap();
        let mut cfg = tiny(1, 1);
        cfg.epsilon.start = 1.0;
        let run = run_training(&net, Scheme::FullMad { levels: 2 }, &cfg).unwrap();
        assert_eq!(run.log.experiences, vec![1; 4]);
        assert_eq!(run.log.episodes.len(), 1);
        assert_eq!(run.log.episodes[0].mean_loss, vec![None; 4]);
    }

    #[test]
    fn sync_count_is_slots_over_period() {
        let net = ScenarioParams::default().build(1).unwrap();
        let run = run_training(&net, Scheme::Homad, &tiny(3, 10)).unwrap();
        assert_eq!(run.log.target_syncs, 30 / 7);
        assert!(run
            .log
            .episodes
            .iter()
            .skip(1)
            .all(|e| e.mean_loss.iter().all(Option::is_some)));
    }

    #[test]
    fn fixed_seed_reproduces_the_log() {
        let net = ScenarioParams::default().build(1).unwrap();
        for scheme in [
            Scheme::Homad,
            Scheme::FullMad { levels: 4 },
            Scheme::FullMaql { levels: 2 },
        ] {
            let a = run_training(&net, scheme, &tiny(3, 10)).unwrap();
            let b = run_training(&net, scheme, &tiny(3, 10)).unwrap();
            assert_eq!(a.log, b.log, "{scheme}");
        }
    }

    #[test]
    fn rejects_degenerate_configs() {
        let net = ScenarioParams::default().build(1).unwrap();
        assert!(run_training(&net, Scheme::Homad, &tiny(0, 10)).is_err());
        let mut cfg = tiny(1, 1);
        cfg.target_sync = 0;
        assert!(run_training(&net, Scheme::Homad, &cfg).is_err());
    }

    #[test]
    fn epsilon_follows_the_schedule() {
        let net = ScenarioParams::default().build(1).unwrap();
        let run = run_training(&net, Scheme::FullMaql { levels: 2 }, &tiny(4, 2)).unwrap();
        for e in &run.log.episodes {
            assert_eq!(e.epsilon, EpsilonSchedule::default().value(e.episode - 1));
        }
    }
}
