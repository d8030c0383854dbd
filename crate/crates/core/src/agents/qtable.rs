use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::argmax;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TabularConfig {
    /// Learning rate.
    pub alpha: f64,
    pub discount: f64,
    /// Rewards (bits/J) are multiplied by this before the update.
    pub reward_scale: f64,
}

impl Default for TabularConfig {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            discount: 0.9,
            reward_scale: 1e-7,
        }
    }
}

/// Quartile bins of per-subchannel gains in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainBins {
    /// Three inner edges per subchannel, ascending.
    edges: Vec<[f64; 3]>,
}

impl GainBins {
    pub const BINS: usize = 4;

    pub fn from_edges(edges: Vec<[f64; 3]>) -> Self {
        Self { edges }
    }

    /// Quartiles of a calibration sample; `samples[i]` is one gain row (linear).
    pub fn from_samples(samples: &[Vec<f64>]) -> Self {
        assert!(!samples.is_empty(), "calibration needs at least one sample");
        let k = samples[0].len();
        let edges = (0..k)
            .map(|j| {
                let mut col: Vec<f64> = samples.iter().map(|row| 10.0 * row[j].log10()).collect();
                col.sort_by(f64::total_cmp);
                let at = |q: f64| col[((col.len() - 1) as f64 * q).round() as usize];
                [at(0.25), at(0.5), at(0.75)]
            })
            .collect();
        Self { edges }
    }

    pub fn n_subchannels(&self) -> usize {
        self.edges.len()
    }

    pub fn bin(&self, subchannel: usize, gain: f64) -> usize {
        let db = 10.0 * gain.log10();
        self.edges[subchannel].iter().filter(|&&e| db >= e).count()
    }

    /// Discrete state: gain bins of every subchannel followed by the
    /// previous action (0 = none, otherwise index + 1).
    pub fn key(&self, gains: &[f64], prev_action: Option<usize>) -> Vec<u16> {
        let mut key: Vec<u16> = gains.iter().enumerate().map(|(j, &g)| self.bin(j, g) as u16).collect();
        key.push(prev_action.map_or(0, |a| a as u16 + 1));
        key
    }
}

/// Sparse Q-table; unseen entries read as zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n_actions: usize,
    entries: HashMap<Vec<u16>, Vec<f64>>,
}

impl QTable {
    pub fn new(n_actions: usize) -> Self {
        Self {
            n_actions,
            entries: HashMap::new(),
        }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Number of visited states.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Visited states and their action values, in no particular order.
    pub fn iter(&self) -> impl Iterator<Item = (&Vec<u16>, &Vec<f64>)> {
        self.entries.iter()
    }

    pub fn values(&self, state: &[u16]) -> Vec<f64> {
        self.entries
            .get(state)
            .cloned()
            .unwrap_or_else(|| vec![0.0; self.n_actions])
    }

    pub fn get(&self, state: &[u16], action: usize) -> f64 {
        self.entries.get(state).map_or(0.0, |row| row[action])
    }

    pub fn greedy(&self, state: &[u16]) -> usize {
        self.entries.get(state).map_or(0, |row| argmax(row))
    }

    /// `Q(s,a) += alpha (r + discount max Q(s',.) - Q(s,a))`.
    pub fn update(&mut self, s: &[u16], a: usize, r: f64, next: &[u16], alpha: f64, discount: f64) {
        let best_next = self
            .entries
            .get(next)
            .map_or(0.0, |row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        let n = self.n_actions;
        let q = &mut self.entries.entry(s.to_vec()).or_insert_with(|| vec![0.0; n])[a];
        *q += alpha * (r + discount * best_next - *q);
    }
}
