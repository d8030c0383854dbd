use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{select_action, AgentError, Experience, ReplayMemory};
use crate::nn::{adam_step, Activation, AdamConfig, AdamState, NetworkParams, NnError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub adam: AdamConfig,
    /// Discount on the bootstrapped target.
    pub discount: f64,
    /// Rewards (bits/J) are multiplied by this before entering the target.
    pub reward_scale: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 128, 64],
            activation: Activation::Relu,
            adam: AdamConfig::default(),
            discount: 0.9,
            reward_scale: 1e-7,
            replay_capacity: 10_000,
            batch_size: 64,
        }
    }
}

/// One agent's online and target networks, optimizer state and replay memory.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub config: DqnConfig,
    online: NetworkParams,
    target: NetworkParams,
    adam: AdamState,
    memory: ReplayMemory,
    syncs: u64,
    rejected: u64,
}

impl DqnAgent {
    pub fn new<R: Rng + ?Sized>(
        state_len: usize,
        n_actions: usize,
        config: DqnConfig,
        rng: &mut R,
    ) -> Result<Self, AgentError> {
        let mut sizes = vec![state_len];
        sizes.extend_from_slice(&config.hidden);
        sizes.push(n_actions);
        let online = NetworkParams::new(&sizes, config.activation, rng)?;
        Ok(Self::from_network(online, config))
    }

    /// Agent around an existing network; the target starts as a copy.
    pub fn from_network(online: NetworkParams, config: DqnConfig) -> Self {
        let adam = AdamState::new(&online, config.adam);
        let memory = ReplayMemory::new(config.replay_capacity);
        Self {
            target: online.clone(),
            online,
            adam,
            memory,
            config,
            syncs: 0,
            rejected: 0,
        }
    }

    pub fn online(&self) -> &NetworkParams {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut NetworkParams {
        &mut self.online
    }

    pub fn target(&self) -> &NetworkParams {
        &self.target
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn syncs(&self) -> u64 {
        self.syncs
    }

    /// Training steps refused because of a non-finite loss or gradient.
    pub fn rejected_steps(&self) -> u64 {
        self.rejected
    }

    pub fn n_actions(&self) -> usize {
        self.online.output_len()
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>, AgentError> {
        Ok(self.online.forward(state)?)
    }

    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], epsilon: f64, rng: &mut R) -> Result<usize, AgentError> {
        if epsilon >= 1.0 {
            // skip the forward pass when it cannot matter
            return Ok(rng.gen_range(0..self.n_actions()));
        }
        Ok(select_action(&self.q_values(state)?, epsilon, rng))
    }

    pub fn remember(&mut self, e: Experience) {
        self.memory.push(e);
    }

    /// Target network := online network.
    pub fn sync_target(&mut self) {
        self.online.clone_into(&mut self.target);
        self.syncs += 1;
    }

    /// Samples a minibatch and trains on it; `None` while memory is short.
    pub fn learn<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Option<f64>, AgentError> {
        let Some(batch) = self.memory.sample(self.config.batch_size, rng) else {
            return Ok(None);
        };
        let out = train_on(&mut self.online, &self.target, &mut self.adam, &self.config, &batch);
        if matches!(out, Err(AgentError::Rejected(_))) {
            self.rejected += 1;
        }
        out.map(Some)
    }

    /// One gradient step on `batch`: `y = scale * r + discount * max_a Q'(s', a)`,
    /// loss `mean (y - Q(s, a))^2`. Returns the loss before the update.
    pub fn dqn_train_step(&mut self, batch: &[&Experience]) -> Result<f64, AgentError> {
        let out = train_on(&mut self.online, &self.target, &mut self.adam, &self.config, batch);
        if matches!(out, Err(AgentError::Rejected(_))) {
            self.rejected += 1;
        }
        out
    }
}

/// Mean squared TD error of `batch` and its gradient with respect to the
/// online outputs.
pub(crate) fn td_loss(
    online_out: &[f64],
    target: &NetworkParams,
    config: &DqnConfig,
    batch: &[&Experience],
) -> Result<(f64, Vec<f64>), AgentError> {
    let n = batch.len();
    let n_actions = target.output_len();
    let next: Vec<f64> = batch.iter().flat_map(|e| e.next_state.iter().copied()).collect();
    let next_q = target.forward_batch(&next, n)?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; n * n_actions];
    for (i, e) in batch.iter().enumerate() {
        let row = &next_q.output()[i * n_actions..(i + 1) * n_actions];
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let y = config.reward_scale * e.reward + config.discount * best;
        let diff = online_out[i * n_actions + e.action] - y;
        loss += diff * diff;
        grad[i * n_actions + e.action] = 2.0 * diff / n as f64;
    }
    Ok((loss / n as f64, grad))
}

fn train_on(
    online: &mut NetworkParams,
    target: &NetworkParams,
    adam: &mut AdamState,
    config: &DqnConfig,
    batch: &[&Experience],
) -> Result<f64, AgentError> {
    if batch.is_empty() {
        return Err(AgentError::Rejected("empty minibatch".into()));
    }
    let n_actions = online.output_len();
    if let Some(e) = batch.iter().find(|e| e.action >= n_actions) {
        return Err(AgentError::ActionOutOfRange {
            index: e.action,
            size: n_actions,
        });
    }
    let states: Vec<f64> = batch.iter().flat_map(|e| e.state.iter().copied()).collect();
    let cache = online.forward_batch(&states, batch.len())?;
    let (loss, grad) = td_loss(cache.output(), target, config, batch)?;
    if !loss.is_finite() {
        return Err(AgentError::Rejected(format!("loss is {loss}")));
    }
    let grads = online.backward(&cache, &grad)?;
    match adam_step(online, &grads, adam) {
        Ok(()) => Ok(loss),
        Err(NnError::NonFinite(what)) => Err(AgentError::Rejected(format!("non-finite {what}"))),
        Err(e) => Err(e.into()),
    }
}
