use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;

/// Bandwidth of a 4G resource block, the unit that 5G-NR numerologies scale.
pub const BASE_SUBCHANNEL_HZ: f64 = 180_000.0;

/// Subchannel bandwidth for numerology `nu`: `2^nu * 180 kHz`.
pub fn bandwidth_of(nu: u8) -> Result<f64, ModelError> {
    if nu > 4 {
        return Err(ModelError::InvalidNumerology(nu));
    }
    Ok(f64::from(1u32 << nu) * BASE_SUBCHANNEL_HZ)
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Thermal noise over `bandwidth_hz`, in watts: `F * N0 * W`.
pub fn noise_power(noise: &NoiseModel, bandwidth_hz: f64) -> f64 {
    // N0 is in dBm/Hz; convert to W/Hz.
    db_to_linear(noise.noise_figure_db) * db_to_linear(noise.psd_dbm_per_hz) * 1e-3 * bandwidth_hz
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceClass {
    Urllc,
    Embb,
    Mmtc,
}

impl ServiceClass {
    /// URLLC and eMBB users are scheduled by the base station; mMTC users access freely.
    pub fn is_grant_based(self) -> bool {
        !matches!(self, ServiceClass::Mmtc)
    }
}

/// Which grant-based service a subchannel's numerology is provisioned for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceSet {
    Urllc,
    Embb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subchannel {
    pub id: usize,
    pub numerology: u8,
    pub bandwidth_hz: f64,
    pub set: ServiceSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance_to_origin(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Per-user quality-of-service requirement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Qos {
    /// Short-packet service (URLLC, mMTC): `bits` delivered within `latency_s`
    /// with decoding error probability `error_prob`.
    Packet { bits: f64, latency_s: f64, error_prob: f64 },
    /// Throughput service (eMBB).
    Rate { target_bps: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserDevice {
    pub id: usize,
    pub service: ServiceClass,
    pub position: Position,
    pub p_max_w: f64,
    pub qos: Qos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub noise_figure_db: f64,
    pub psd_dbm_per_hz: f64,
    pub circuit_power_w: f64,
}

/// Log-distance path loss, `PL(d) = intercept + slope * log10(d / 1 km)` in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLoss {
    pub intercept_db: f64,
    pub slope_db: f64,
}

impl PathLoss {
    pub fn loss_db(&self, distance_m: f64) -> f64 {
        self.intercept_db + self.slope_db * (distance_m / 1000.0).log10()
    }

    /// Linear power gain (< 1) at `distance_m`.
    pub fn gain(&self, distance_m: f64) -> f64 {
        db_to_linear(-self.loss_db(distance_m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    /// Rician K-factor in dB; `f64::INFINITY` gives a pure line-of-sight channel.
    pub rician_k_db: f64,
    pub path_loss: PathLoss,
}

/// Immutable description of one cell.
///
/// Users are indexed URLLC first, then eMBB, then mMTC. Subchannels serving
/// URLLC (`K_U`) come before those serving eMBB (`K_E`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub users: Vec<UserDevice>,
    pub subchannels: Vec<Subchannel>,
    pub noise: NoiseModel,
    pub channel: ChannelModel,
    pub cell_radius_m: f64,
    /// `(user, subchannel)` grants for grant-based users.
    pub grants: Vec<(usize, usize)>,
}

impl NetworkConfig {
    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_subchannels(&self) -> usize {
        self.subchannels.len()
    }

    pub fn service(&self, user: usize) -> ServiceClass {
        self.users[user].service
    }

    pub fn bandwidth(&self, subchannel: usize) -> f64 {
        self.subchannels[subchannel].bandwidth_hz
    }

    /// `sigma_k^2` for subchannel `k`.
    pub fn noise_power(&self, subchannel: usize) -> f64 {
        noise_power(&self.noise, self.bandwidth(subchannel))
    }

    /// mMTC user ids in ascending order; agent `m` is the `m`-th entry.
    pub fn mmtc_users(&self) -> Vec<usize> {
        self.users
            .iter()
            .filter(|u| u.service == ServiceClass::Mmtc)
            .map(|u| u.id)
            .collect()
    }

    pub fn grants_of(&self, user: usize) -> impl Iterator<Item = usize> + '_ {
        self.grants.iter().filter(move |(z, _)| *z == user).map(|(_, k)| *k)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.users.is_empty() {
            return bad("no users".into());
        }
        if self.subchannels.is_empty() {
            return bad("no subchannels".into());
        }
        if !(self.noise.circuit_power_w > 0.0) {
            return bad("circuit power must be positive".into());
        }
        if self.noise.noise_figure_db < 0.0 {
            return bad("noise figure must be >= 0 dB".into());
        }
        for (i, u) in self.users.iter().enumerate() {
            if u.id != i {
                return bad(format!("user at index {i} has id {}", u.id));
            }
            if !(u.p_max_w > 0.0) {
                return bad(format!("user {i}: power budget must be positive"));
            }
            if u.position.distance_to_origin() > self.cell_radius_m + 1e-9 {
                return bad(format!("user {i} lies outside the cell"));
            }
            match (u.service, u.qos) {
                (ServiceClass::Embb, Qos::Rate { target_bps }) if target_bps >= 0.0 => {}
                (
                    ServiceClass::Urllc | ServiceClass::Mmtc,
                    Qos::Packet {
                        bits,
                        latency_s,
                        error_prob,
                    },
                ) if bits > 0.0 && latency_s > 0.0 && error_prob > 0.0 && error_prob < 1.0 => {}
                _ => return bad(format!("user {i}: QoS does not match its service or is out of range")),
            }
        }
        for (k, sc) in self.subchannels.iter().enumerate() {
            if sc.id != k {
                return bad(format!("subchannel at index {k} has id {}", sc.id));
            }
            let w = bandwidth_of(sc.numerology)?;
            if (w - sc.bandwidth_hz).abs() > 1e-6 {
                return bad(format!("subchannel {k}: bandwidth does not match numerology"));
            }
        }
        let mut per_sc = vec![0usize; self.subchannels.len()];
        for &(z, k) in &self.grants {
            if z >= self.users.len() || k >= self.subchannels.len() {
                return bad(format!("grant ({z}, {k}) out of range"));
            }
            if !self.users[z].service.is_grant_based() {
                return bad(format!("grant to free-access user {z}"));
            }
            per_sc[k] += 1;
        }
        if let Some(k) = per_sc.iter().position(|&c| c > 1) {
            return bad(format!("subchannel {k} granted to more than one user"));
        }
        Ok(())
    }
}

/// Scenario parameters from which a [`NetworkConfig`] is drawn.
///
/// Defaults reproduce the reference scenario: one URLLC and one eMBB user,
/// four mMTC users, one subchannel per grant-based service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioParams {
    pub cell_radius_m: f64,
    pub min_distance_m: f64,
    pub urllc_users: usize,
    pub embb_users: usize,
    pub mmtc_users: usize,
    pub urllc_subchannels: usize,
    pub embb_subchannels: usize,
    pub numerology_urllc: u8,
    pub numerology_embb: u8,
    pub max_power_dbm: f64,
    pub circuit_power_w: f64,
    pub noise_figure_db: f64,
    pub noise_psd_dbm_hz: f64,
    pub packet_bytes: f64,
    pub latency_ms: f64,
    pub error_probability: f64,
    /// eMBB demand as spectral efficiency; the bps target is this times `W_E`.
    pub embb_rate_bps_hz: f64,
    pub rician_k_db: f64,
    pub pathloss_intercept_db: f64,
    pub pathloss_slope_db: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            cell_radius_m: 500.0,
            min_distance_m: 35.0,
            urllc_users: 1,
            embb_users: 1,
            mmtc_users: 4,
            urllc_subchannels: 1,
            embb_subchannels: 1,
            numerology_urllc: 4,
            numerology_embb: 1,
            max_power_dbm: 23.0,
            circuit_power_w: 0.05,
            noise_figure_db: 6.0,
            noise_psd_dbm_hz: -174.0,
            packet_bytes: 32.0,
            latency_ms: 2.0,
            error_probability: 1e-5,
            embb_rate_bps_hz: 4.0,
            rician_k_db: 10.0,
            pathloss_intercept_db: 128.1,
            pathloss_slope_db: 37.6,
        }
    }
}

impl ScenarioParams {
    pub fn max_power_w(&self) -> f64 {
        10f64.powf(self.max_power_dbm / 10.0) * 1e-3
    }

    pub fn total_users(&self) -> usize {
        self.urllc_users + self.embb_users + self.mmtc_users
    }

    /// Places users uniformly over the annulus `[min_distance, radius]` and applies
    /// the default grant schedule: grant-based user `i` of each service gets the
    /// `i`-th subchannel of that service's set.
    pub fn build(&self, seed: u64) -> Result<NetworkConfig, ModelError> {
        let invalid = |m: &str| ModelError::InvalidConfig(m.to_string());
        if self.urllc_users > self.urllc_subchannels {
            return Err(invalid("fewer URLLC subchannels than URLLC users"));
        }
        if self.embb_users > self.embb_subchannels {
            return Err(invalid("fewer eMBB subchannels than eMBB users"));
        }
        if self.total_users() == 0 {
            return Err(invalid("no users"));
        }
        if !(self.min_distance_m > 0.0 && self.min_distance_m < self.cell_radius_m) {
            return Err(invalid("min_distance_m must lie in (0, cell_radius_m)"));
        }
        let w_u = bandwidth_of(self.numerology_urllc)?;
        let w_e = bandwidth_of(self.numerology_embb)?;

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(PLACEMENT_STREAM);
        let (r_min2, r_max2) = (self.min_distance_m.powi(2), self.cell_radius_m.powi(2));
        let mut place = || {
            let d = rng.gen_range(r_min2..=r_max2).sqrt();
            let phi = rng.gen_range(0.0..std::f64::consts::TAU);
            Position {
                x: d * phi.cos(),
                y: d * phi.sin(),
            }
        };

        let p_max = self.max_power_w();
        let packet = Qos::Packet {
            bits: self.packet_bytes * 8.0,
            latency_s: self.latency_ms * 1e-3,
            error_prob: self.error_probability,
        };
        let classes = std::iter::repeat(ServiceClass::Urllc)
            .take(self.urllc_users)
            .chain(std::iter::repeat(ServiceClass::Embb).take(self.embb_users))
            .chain(std::iter::repeat(ServiceClass::Mmtc).take(self.mmtc_users));
        let users = classes
            .enumerate()
            .map(|(id, service)| UserDevice {
                id,
                service,
                position: place(),
                p_max_w: p_max,
                qos: match service {
                    ServiceClass::Embb => Qos::Rate {
                        target_bps: self.embb_rate_bps_hz * w_e,
                    },
                    _ => packet,
                },
            })
            .collect();

        let mut subchannels = Vec::with_capacity(self.urllc_subchannels + self.embb_subchannels);
        for _ in 0..self.urllc_subchannels {
            let id = subchannels.len();
            subchannels.push(Subchannel {
                id,
                numerology: self.numerology_urllc,
                bandwidth_hz: w_u,
                set: ServiceSet::Urllc,
            });
        }
        for _ in 0..self.embb_subchannels {
            let id = subchannels.len();
            subchannels.push(Subchannel {
                id,
                numerology: self.numerology_embb,
                bandwidth_hz: w_e,
                set: ServiceSet::Embb,
            });
        }

        let grants = (0..self.urllc_users)
            .map(|i| (i, i))
            .chain((0..self.embb_users).map(|i| (self.urllc_users + i, self.urllc_subchannels + i)))
            .collect();

        let config = NetworkConfig {
            users,
            subchannels,
            noise: NoiseModel {
                noise_figure_db: self.noise_figure_db,
                psd_dbm_per_hz: self.noise_psd_dbm_hz,
                circuit_power_w: self.circuit_power_w,
            },
            channel: ChannelModel {
                rician_k_db: self.rician_k_db,
                path_loss: PathLoss {
                    intercept_db: self.pathloss_intercept_db,
                    slope_db: self.pathloss_slope_db,
                },
            },
            cell_radius_m: self.cell_radius_m,
            grants,
        };
        config.validate()?;
        Ok(config)
    }
}

const PLACEMENT_STREAM: u64 = 0x706c_6163_6500;
