//! Exact subtractive subproblem on one subchannel.
//!
//! With SIC the per-user log terms telescope, so the subchannel's Shannon sum
//! depends only on the total received power `S`:
//! `sum_l log2(1 + gamma_l) = log2(1 + S / sigma^2)`. Every QoS demand is a
//! SINR floor `Y_l >= gamma_l (T_(l+1) + sigma^2)` (received powers `Y`, tail
//! sums `T`), and every budget is a cap `Y_l <= g_l P_max`, so
//! `max W log2(1 + S/sigma^2) - zeta sum_l Y_l / g_l` is concave over a
//! polytope. At its optimum at most one user is strictly between floor and cap.
//! [`solve_subchannel`] enumerates that user and the floor/cap pattern of the
//! others; along each such edge `S` and the power are affine in the free
//! user's `Y`, and the maximizer is the same closed form as the mMTC solution.

use std::f64::consts::LN_2;

/// One user on the subchannel, listed in decoding order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SicUser {
    pub gain: f64,
    pub p_max: f64,
    /// SINR floor.
    pub floor: f64,
}

/// Affine `a + b y` in the free user's received power.
#[derive(Clone, Copy)]
struct Affine {
    a: f64,
    b: f64,
}

const SLACK: f64 = 1e-12;

/// Transmit powers (decoding order) maximizing `W log2(1 + S/sigma^2) - zeta P`,
/// or `None` when no allocation meets every floor within the caps.
pub fn solve_subchannel(users: &[SicUser], noise: f64, bandwidth_hz: f64, zeta: f64) -> Option<Vec<f64>> {
    let n = users.len();
    if n == 0 {
        return Some(vec![]);
    }
    let cap = |l: usize| users[l].gain * users[l].p_max;
    let mut best: Option<(f64, usize, usize, f64)> = None;

    for free in 0..n {
        for mask in 0..(1usize << (n - 1)) {
            let at_cap = |l: usize| {
                let bit = if l < free { l } else { l - 1 };
                mask >> bit & 1 == 1
            };
            let Some((lo, hi, s, p)) = edge(users, noise, free, &at_cap, &cap) else {
                continue;
            };
            let y = if zeta > 0.0 {
                (bandwidth_hz * s.b / (zeta * p.b * LN_2) - noise - s.a) / s.b
            } else {
                f64::INFINITY
            };
            let y = y.clamp(lo, hi);
            let value = bandwidth_hz * (1.0 + (s.a + s.b * y) / noise).log2() - zeta * (p.a + p.b * y);
            if best.map_or(true, |(v, ..)| value > v) {
                best = Some((value, free, mask, y));
            }
        }
    }

    let (_, free, mask, y) = best?;
    let at_cap = |l: usize| {
        let bit = if l < free { l } else { l - 1 };
        mask >> bit & 1 == 1
    };
    let mut received = vec![0.0; n];
    let mut tail = 0.0;
    for l in (0..n).rev() {
        received[l] = if l == free {
            y
        } else if at_cap(l) {
            cap(l)
        } else {
            users[l].floor * (tail + noise)
        };
        tail += received[l];
    }
    Some(
        received
            .iter()
            .zip(users)
            .map(|(r, u)| (r / u.gain).min(u.p_max))
            .collect(),
    )
}

/// Feasible interval of the free user's received power and the affine total
/// received power and transmit power along one edge.
fn edge(
    users: &[SicUser],
    noise: f64,
    free: usize,
    at_cap: &dyn Fn(usize) -> bool,
    cap: &dyn Fn(usize) -> f64,
) -> Option<(f64, f64, Affine, Affine)> {
    let n = users.len();
    let mut tail = 0.0;
    let mut power = 0.0;
    for l in (free + 1..n).rev() {
        let floor = users[l].floor * (tail + noise);
        let y = if at_cap(l) { cap(l) } else { floor };
        if y < floor * (1.0 - SLACK) || y > cap(l) * (1.0 + SLACK) {
            return None;
        }
        tail += y;
        power += y / users[l].gain;
    }
    let lo = users[free].floor * (tail + noise);
    let mut hi = cap(free);
    let mut t = Affine { a: tail, b: 1.0 };
    let mut p = Affine {
        a: power,
        b: 1.0 / users[free].gain,
    };
    for l in (0..free).rev() {
        let g = users[l].floor;
        if at_cap(l) {
            // floor of l must stay below its cap: g (T + sigma^2) <= cap
            if g > 0.0 {
                hi = hi.min((cap(l) / g - noise - t.a) / t.b);
            }
            t.a += cap(l);
            p.a += cap(l) / users[l].gain;
        } else {
            let y = Affine {
                a: g * (t.a + noise),
                b: g * t.b,
            };
            if y.b > 0.0 {
                hi = hi.min((cap(l) - y.a) / y.b);
            } else if y.a > cap(l) * (1.0 + SLACK) {
                return None;
            }
            t = Affine {
                a: t.a + y.a,
                b: t.b + y.b,
            };
            p = Affine {
                a: p.a + y.a / users[l].gain,
                b: p.b + y.b / users[l].gain,
            };
        }
    }
    if lo > hi * (1.0 + SLACK) {
        return None;
    }
    Some((lo, hi.max(lo), t, p))
}
