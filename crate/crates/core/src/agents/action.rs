use serde::{Deserialize, Serialize};

use super::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ActionMode {
    /// Joint subchannel and power level, `K * L` actions.
    Joint { levels: usize },
    /// Subchannel only, `K` actions; power comes from the optimizer.
    SubchannelOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub mode: ActionMode,
    pub n_subchannels: usize,
}

/// Decoded action; indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub subchannel: usize,
    pub level: Option<usize>,
}

impl ActionSpace {
    pub fn size(&self) -> usize {
        match self.mode {
            ActionMode::Joint { levels } => self.n_subchannels * levels,
            ActionMode::SubchannelOnly => self.n_subchannels,
        }
    }

    /// Joint layout: `index = k * L + l`.
    pub fn decode(&self, index: usize) -> Result<Action, AgentError> {
        if index >= self.size() {
            return Err(AgentError::ActionOutOfRange {
                index,
                size: self.size(),
            });
        }
        Ok(match self.mode {
            ActionMode::Joint { levels } => Action {
                subchannel: index / levels,
                level: Some(index % levels),
            },
            ActionMode::SubchannelOnly => Action {
                subchannel: index,
                level: None,
            },
        })
    }

    pub fn encode(&self, action: Action) -> Result<usize, AgentError> {
        let index = match (self.mode, action.level) {
            (ActionMode::Joint { levels }, Some(l)) if l < levels => action.subchannel * levels + l,
            (ActionMode::SubchannelOnly, None) => action.subchannel,
            _ => usize::MAX,
        };
        if index >= self.size() {
            return Err(AgentError::ActionOutOfRange {
                index,
                size: self.size(),
            });
        }
        Ok(index)
    }
}

/// `levels` transmit powers in W, evenly spaced in dBm over
/// `[P_max - range_db, P_max]`, lowest first. One level means `P_max`.
pub fn power_levels(p_max_w: f64, levels: usize, range_db: f64) -> Vec<f64> {
    let top = 10.0 * (p_max_w * 1e3).log10();
    (0..levels)
        .map(|l| {
            if levels == 1 {
                p_max_w
            } else {
                let dbm = top - range_db + range_db * l as f64 / (levels - 1) as f64;
                10f64.powf(dbm / 10.0) * 1e-3
            }
        })
        .collect()
}
