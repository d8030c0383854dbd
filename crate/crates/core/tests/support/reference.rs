//! Energy-efficiency factor of a constraint-clean allocation, recomputed from
//! first principles with statrs' normal quantile.

use homad_core::system::{ChannelRealization, NetworkConfig, Qos, ServiceClass};
use statrs::distribution::{ContinuousCDF, Normal};

/// `R_tot / (P_tx + M P_c)` assuming every demand holds. `assigned` and
/// `power` are `[user][subchannel]`.
pub fn clean_ee(
    assigned: &[Vec<bool>],
    power: &[Vec<f64>],
    channels: &ChannelRealization,
    config: &NetworkConfig,
) -> f64 {
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let mut rate = 0.0;
    for (k, sc) in config.subchannels.iter().enumerate() {
        let w = sc.bandwidth_hz;
        let noise = 10f64.powf((config.noise.noise_figure_db + config.noise.psd_dbm_per_hz) / 10.0) * 1e-3 * w;
        let mut members: Vec<usize> = (0..config.users.len()).filter(|&z| assigned[z][k]).collect();
        // URLLC decoded first, then strongest first
        members.sort_by(|&a, &b| {
            let ua = config.users[a].service == ServiceClass::Urllc;
            let ub = config.users[b].service == ServiceClass::Urllc;
            ub.cmp(&ua)
                .then(channels.gain(b, k).partial_cmp(&channels.gain(a, k)).unwrap())
                .then(a.cmp(&b))
        });
        for (i, &z) in members.iter().enumerate() {
            let interference: f64 = members[i + 1..]
                .iter()
                .map(|&j| power[j][k] * channels.gain(j, k))
                .sum();
            let sinr = power[z][k] * channels.gain(z, k) / (interference + noise);
            let shannon = w * (1.0 + sinr).log2();
            rate += match config.users[z].qos {
                Qos::Rate { .. } => shannon,
                Qos::Packet {
                    latency_s, error_prob, ..
                } => {
                    let q = -std_normal.inverse_cdf(error_prob);
                    shannon - (w / latency_s).sqrt() * q / std::f64::consts::LN_2
                }
            };
        }
    }
    let p_tx: f64 = power.iter().flatten().sum();
    rate / (p_tx + config.users.len() as f64 * config.noise.circuit_power_w)
}
