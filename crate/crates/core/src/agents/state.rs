use serde::{Deserialize, Serialize};

/// What an agent did in the previous slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub subchannel: usize,
    pub power_w: f64,
}

/// Observation `[gains | SC indicators | powers]`, length `3K`.
///
/// Gains enter in dB mapped affinely by `(dB - center) / span`, which puts
/// the default cell's range near `[-1, 1]`; powers are divided by `P_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateEncoder {
    pub n_subchannels: usize,
    pub gain_center_db: f64,
    pub gain_span_db: f64,
    pub p_max_w: f64,
}

impl StateEncoder {
    pub fn new(n_subchannels: usize, p_max_w: f64) -> Self {
        Self {
            n_subchannels,
            gain_center_db: -95.0,
            gain_span_db: 25.0,
            p_max_w,
        }
    }

    pub fn len(&self) -> usize {
        3 * self.n_subchannels
    }

    pub fn is_empty(&self) -> bool {
        self.n_subchannels == 0
    }

    /// `gains` is the agent's row of linear channel gains; `prev` is `None` in
    /// the first slot of an episode.
    pub fn encode(&self, gains: &[f64], prev: Option<Selection>) -> Vec<f64> {
        let k = self.n_subchannels;
        assert_eq!(gains.len(), k, "one gain per subchannel");
        let mut s = vec![0.0; 3 * k];
        for (x, g) in s.iter_mut().zip(gains) {
            *x = (10.0 * g.log10() - self.gain_center_db) / self.gain_span_db;
        }
        if let Some(p) = prev {
            s[k + p.subchannel] = 1.0;
            s[2 * k + p.subchannel] = p.power_w / self.p_max_w;
        }
        s
    }

    /// Inverse of [`StateEncoder::encode`].
    pub fn decode(&self, s: &[f64]) -> (Vec<f64>, Option<Selection>) {
        let k = self.n_subchannels;
        let gains = s[..k]
            .iter()
            .map(|x| 10f64.powf((x * self.gain_span_db + self.gain_center_db) / 10.0))
            .collect();
        let prev = s[k..2 * k].iter().position(|&b| b == 1.0).map(|j| Selection {
            subchannel: j,
            power_w: s[2 * k + j] * self.p_max_w,
        });
        (gains, prev)
    }
}
