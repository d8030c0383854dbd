use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ModelError, NetworkConfig};

/// Linear channel power gains `g_z^(k)(t)` for one time slot, stored user-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub t: u64,
    n_users: usize,
    n_subchannels: usize,
    gains: Vec<f64>,
}

impl ChannelRealization {
    /// Builds a realization from an explicit `[user][subchannel]` table.
    pub fn from_rows(t: u64, rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let n_users = rows.len();
        let n_subchannels = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_subchannels) {
            return Err(ModelError::Shape("ragged gain table".into()));
        }
        let gains: Vec<f64> = rows.iter().flatten().copied().collect();
        if let Some(g) = gains.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(ModelError::Shape(format!(
                "channel gains must be positive and finite, got {g}"
            )));
        }
        Ok(Self {
            t,
            n_users,
            n_subchannels,
            gains,
        })
    }

    pub fn gain(&self, user: usize, subchannel: usize) -> f64 {
        self.gains[user * self.n_subchannels + subchannel]
    }

    /// Gains seen by `user` on every subchannel.
    pub fn row(&self, user: usize) -> &[f64] {
        &self.gains[user * self.n_subchannels..(user + 1) * self.n_subchannels]
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_subchannels(&self) -> usize {
        self.n_subchannels
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_users).map(|z| self.row(z).to_vec()).collect()
    }
}

/// One draw of `|h|^2` for a unit-power Rician channel with K-factor `k_linear`.
///
/// `h = sqrt(K/(K+1)) + sqrt(1/(K+1)) * CN(0, 1)`, so `E|h|^2 = 1`.
pub fn rician_power_gain<R: Rng + ?Sized>(k_linear: f64, rng: &mut R) -> f64 {
    if k_linear.is_infinite() {
        return 1.0;
    }
    let los = (k_linear / (k_linear + 1.0)).sqrt();
    let scatter = (0.5 / (k_linear + 1.0)).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    let (a, b) = (los + scatter * re, scatter * im);
    a * a + b * b
}

/// Draws independent block-fading gains for every user/subchannel pair.
///
/// The realization depends only on `(rng_seed, t)`, so every scheme evaluated
/// with the same seed sees the same channels.
pub fn generate_channels(config: &NetworkConfig, rng_seed: u64, t: u64) -> ChannelRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(t.wrapping_add(1));
    let k_linear = 10f64.powf(config.channel.rician_k_db / 10.0);
    let n_subchannels = config.n_subchannels();
    let mut gains = Vec::with_capacity(config.n_users() * n_subchannels);
    for user in &config.users {
        let pl = config.channel.path_loss.gain(user.position.distance_to_origin());
        for _ in 0..n_subchannels {
            gains.push(pl * rician_power_gain(k_linear, &mut rng));
        }
    }
    ChannelRealization {
        t,
        n_users: config.n_users(),
        n_subchannels,
        gains,
    }
}
