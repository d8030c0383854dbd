//! JSON bodies exchanged by the HTTP service and its client, plus the
//! stateless handlers behind `/v1/allocate` and `/v1/evaluate`.

use serde::{Deserialize, Serialize};

use crate::experiment::ResultRow;
use crate::power::DinkelbachConfig;
use crate::system::{
    evaluate, generate_channels, AllocationState, ChannelRealization, NetworkConfig, ScenarioParams, Violation,
};
use crate::trainer::{apply_actions_homad, compute_reward};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateResponse {
    /// Training runs the spec expands to.
    pub runs: usize,
    /// The spec with every default filled in.
    pub normalized: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitRequest {
    /// Spec text; see [`crate::experiment::ExperimentSpec`].
    pub spec: String,
    /// Directory for artifacts; without it only the rows are kept.
    #[serde(default)]
    pub out_dir: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Completed,
    Failed,
}

impl JobState {
    pub fn is_finished(self) -> bool {
        matches!(self, JobState::Completed | JobState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobView {
    pub id: u64,
    pub state: JobState,
    pub done: usize,
    pub total: usize,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub out_dir: Option<String>,
    /// Filled once the job completes.
    #[serde(default)]
    pub rows: Vec<ResultRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarizeRequest {
    pub dir: String,
}

/// Network and channel an allocation is computed on. Explicit `gains`
/// (users x subchannels) replace the generated slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkRequest {
    pub scenario: ScenarioParams,
    pub seed: u64,
    pub slot: u64,
    pub gains: Option<Vec<Vec<f64>>>,
}

impl Default for NetworkRequest {
    fn default() -> Self {
        Self {
            scenario: ScenarioParams::default(),
            seed: 1,
            slot: 0,
            gains: None,
        }
    }
}

impl NetworkRequest {
    pub fn realize(&self) -> Result<(NetworkConfig, ChannelRealization), String> {
        let config = self.scenario.build(self.seed).map_err(|e| e.to_string())?;
        let channels = match &self.gains {
            Some(rows) => {
                let ch = ChannelRealization::from_rows(self.slot, rows).map_err(|e| e.to_string())?;
                if ch.n_users() != config.n_users() || ch.n_subchannels() != config.n_subchannels() {
                    return Err(format!(
                        "gains are {}x{}, network is {}x{}",
                        ch.n_users(),
                        ch.n_subchannels(),
                        config.n_users(),
                        config.n_subchannels()
                    ));
                }
                ch
            }
            None => generate_channels(&config, self.seed, self.slot),
        };
        Ok((config, channels))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocateRequest {
    #[serde(default)]
    pub network: NetworkRequest,
    /// Subchannel of each mMTC user, in user order.
    pub subchannels: Vec<usize>,
    #[serde(default)]
    pub power: DinkelbachConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocateResponse {
    pub feasible: bool,
    pub zeta: f64,
    pub reward: f64,
    /// Users x subchannels, W.
    pub power: Vec<Vec<f64>>,
    pub iterations: usize,
    #[serde(default)]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    #[serde(default)]
    pub network: NetworkRequest,
    pub assignment: Vec<Vec<bool>>,
    pub power: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateResponse {
    pub zeta: f64,
    pub reward: f64,
    pub total_rate: f64,
    pub total_power: f64,
    pub satisfied: bool,
    pub violations: Vec<Violation>,
}

/// Dinkelbach power allocation for a subchannel choice.
pub fn allocate(req: &AllocateRequest) -> Result<AllocateResponse, String> {
    let (config, channels) = req.network.realize()?;
    let outcome = apply_actions_homad(&req.subchannels, &channels, &config, &req.power).map_err(|e| e.to_string())?;
    Ok(AllocateResponse {
        feasible: outcome.is_clean(),
        zeta: outcome.zeta,
        reward: outcome.reward,
        power: outcome.state.power_rows(),
        iterations: outcome.iterations,
        detail: outcome.flag.map(|f| format!("{f:?}").to_lowercase()),
    })
}

/// Rates, constraints and reward of an explicit allocation.
pub fn evaluate_request(req: &EvaluateRequest) -> Result<EvaluateResponse, String> {
    let (config, channels) = req.network.realize()?;
    let state = AllocationState::from_rows(&req.assignment, &req.power).map_err(|e| e.to_string())?;
    let ev = evaluate(&state, &channels, &config).map_err(|e| e.to_string())?;
    Ok(EvaluateResponse {
        reward: compute_reward(&ev),
        zeta: ev.zeta,
        total_rate: ev.total_rate,
        total_power: ev.total_power,
        satisfied: ev.report.satisfied(),
        violations: ev.report.violations,
    })
}
