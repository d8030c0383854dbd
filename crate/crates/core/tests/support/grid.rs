//! Exhaustive grid search over transmit powers, coded independently of the
//! library's evaluator.

use homad_core::system::{ChannelRealization, NetworkConfig, Qos, ServiceClass};
use statrs::distribution::{ContinuousCDF, Normal};

fn q_inv(eps: f64) -> f64 {
    -Normal::new(0.0, 1.0).unwrap().inverse_cdf(eps)
}

struct Member {
    gain: f64,
    p_max: f64,
    /// SINR floor.
    floor: f64,
    /// `W * Phi` subtracted from the Shannon rate (0 for eMBB).
    penalty: f64,
    urllc: bool,
}

/// Feasible `(P, R)` pairs of one subchannel's members on a `points`-step grid
/// over `(0, P_max]`.
fn frontier(members: &[Member], w: f64, noise: f64, points: usize) -> Vec<(f64, f64)> {
    // decoding order: URLLC first, then descending gain
    let mut order: Vec<&Member> = members.iter().collect();
    order.sort_by(|a, b| b.urllc.cmp(&a.urllc).then(b.gain.partial_cmp(&a.gain).unwrap()));
    let mut pts = Vec::new();
    // last-decoded user first: its SINR does not depend on anyone else
    fn walk(
        order: &[&Member],
        l: usize,
        tail: f64,
        power: f64,
        rate: f64,
        ctx: (f64, f64, usize),
        pts: &mut Vec<(f64, f64)>,
    ) {
        let (w, noise, points) = ctx;
        let m = order[l];
        for i in 1..=points {
            let p = m.p_max * i as f64 / points as f64;
            let g = p * m.gain / (tail + noise);
            if g < m.floor * (1.0 - 1e-9) {
                continue;
            }
            let r = rate + w * (1.0 + g).log2() - m.penalty;
            if l == 0 {
                pts.push((power + p, r));
            } else {
                walk(order, l - 1, tail + p * m.gain, power + p, r, ctx, pts);
            }
        }
    }
    walk(&order, order.len() - 1, 0.0, 0.0, 0.0, (w, noise, points), &mut pts);
    pts
}

/// Best EE factor reachable on the grid, or `None` when no grid point is
/// feasible. Grant-based users must hold exactly one subchannel.
pub fn grid_optimum(
    assignment: &[Vec<bool>],
    channels: &ChannelRealization,
    config: &NetworkConfig,
    points: usize,
) -> Option<f64> {
    let k_n = config.subchannels.len();
    let mut fronts = Vec::new();
    for k in 0..k_n {
        let w = config.subchannels[k].bandwidth_hz;
        let noise = 10f64.powf((config.noise.noise_figure_db + config.noise.psd_dbm_per_hz) / 10.0) * 1e-3 * w;
        let mut members = Vec::new();
        for u in &config.users {
            if !assignment[u.id][k] {
                continue;
            }
            let (floor, penalty) = match u.qos {
                Qos::Packet {
                    bits,
                    latency_s,
                    error_prob,
                } => {
                    let dw = latency_s * w;
                    let phi = q_inv(error_prob) / (std::f64::consts::LN_2 * dw.sqrt());
                    ((bits / dw + phi).exp2() - 1.0, w * phi)
                }
                Qos::Rate { target_bps } => ((target_bps / w).exp2() - 1.0, 0.0),
            };
            members.push(Member {
                gain: channels.gain(u.id, k),
                p_max: u.p_max_w,
                floor,
                penalty,
                urllc: u.service == ServiceClass::Urllc,
            });
        }
        if members.is_empty() {
            fronts.push(vec![(0.0, 0.0)]);
            continue;
        }
        let f = frontier(&members, w, noise, points);
        if f.is_empty() {
            return None;
        }
        fronts.push(f);
    }
    let fixed = config.users.len() as f64 * config.noise.circuit_power_w;
    // Dinkelbach over the finite product set: exact after finitely many steps.
    let mut zeta = 0.0f64;
    loop {
        let (mut r, mut p) = (0.0, 0.0);
        for f in &fronts {
            let &(pw, rate) = f
                .iter()
                .max_by(|a, b| (a.1 - zeta * a.0).partial_cmp(&(b.1 - zeta * b.0)).unwrap())
                .unwrap();
            r += rate;
            p += pw;
        }
        let next = r / (p + fixed);
        if next <= zeta * (1.0 + 1e-14) {
            return Some(zeta.max(next));
        }
        zeta = next;
    }
}
