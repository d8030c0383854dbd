use std::cmp::Ordering;

use super::{ChannelRealization, ModelError, NetworkConfig, ServiceClass};

/// SIC decoding order of the users sharing `subchannel`.
///
/// The URLLC user (if any) is decoded first. Everyone else follows in strictly
/// descending channel gain; equal gains decode the lower user id first.
pub fn decoding_order(
    members: &[usize],
    subchannel: usize,
    config: &NetworkConfig,
    channels: &ChannelRealization,
) -> Result<Vec<usize>, ModelError> {
    let grant_based: Vec<usize> = members
        .iter()
        .copied()
        .filter(|&z| config.service(z).is_grant_based())
        .collect();
    if grant_based.len() > 1 {
        return Err(ModelError::GrantBasedCollision {
            subchannel,
            users: grant_based,
        });
    }
    Ok(order_unchecked(members, subchannel, config, channels))
}

/// Same rule as [`decoding_order`] but tolerates grant-based collisions, placing
/// every URLLC user first by id. Used when evaluating states that may violate (C1).
pub(crate) fn order_unchecked(
    members: &[usize],
    subchannel: usize,
    config: &NetworkConfig,
    channels: &ChannelRealization,
) -> Vec<usize> {
    let mut order = members.to_vec();
    order.sort_by(|&a, &b| {
        let ua = config.service(a) == ServiceClass::Urllc;
        let ub = config.service(b) == ServiceClass::Urllc;
        ub.cmp(&ua)
            .then_with(|| {
                channels
                    .gain(b, subchannel)
                    .partial_cmp(&channels.gain(a, subchannel))
                    .unwrap_or(Ordering::Equal)
            })
            .then_with(|| a.cmp(&b))
    });
    order
}

/// Per-user SINR on one subchannel, given received powers `Y = P * g` listed in
/// decoding order. User `l` is interfered by every user decoded after it.
pub fn sinr(received: &[f64], noise: f64) -> Result<Vec<f64>, ModelError> {
    if !(noise > 0.0) {
        return Err(ModelError::InvalidNoise(noise));
    }
    let mut out = vec![0.0; received.len()];
    let mut tail = 0.0;
    for (i, &y) in received.iter().enumerate().rev() {
        out[i] = y / (tail + noise);
        tail += y;
    }
    Ok(out)
}
