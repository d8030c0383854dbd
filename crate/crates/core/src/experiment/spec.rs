use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::system::ScenarioParams;
use crate::trainer::{Scheme, TrainingConfig};

/// Latency, error probability and eMBB spectral-efficiency demand, swept together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequirementTuple {
    pub latency_ms: f64,
    pub error_probability: f64,
    pub embb_rate_bps_hz: f64,
}

impl RequirementTuple {
    pub const LADDER: [RequirementTuple; 4] = [
        RequirementTuple {
            latency_ms: 2.0,
            error_probability: 1e-2,
            embb_rate_bps_hz: 2.0,
        },
        RequirementTuple {
            latency_ms: 1.0,
            error_probability: 1e-4,
            embb_rate_bps_hz: 4.0,
        },
        RequirementTuple {
            latency_ms: 0.5,
            error_probability: 1e-5,
            embb_rate_bps_hz: 6.0,
        },
        RequirementTuple {
            latency_ms: 0.4,
            error_probability: 1e-6,
            embb_rate_bps_hz: 8.0,
        },
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// One point; schemes are still compared side by side.
    None,
    /// Index into `sweep.requirements`, looser to stricter.
    Requirements,
    /// Number of mMTC users.
    MmtcUsers,
    /// Power levels of the quantized schemes; HOMAD ignores it.
    Levels,
    /// Same as `None`: the scheme list is the axis.
    Scheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<usize>,
    pub requirements: Vec<RequirementTuple>,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            axis: SweepAxis::None,
            values: Vec::new(),
            requirements: RequirementTuple::LADDER.to_vec(),
        }
    }
}

/// A full experiment: scenario, training settings, schemes and sweep.
///
/// Stored as flat `key = value` text with dotted section names
/// (`scenario.mmtc_users = 8`); any absent key keeps its default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub schemes: Vec<Scheme>,
    pub replications: usize,
    /// Replication `r` uses seed `seed + r` for placement, channels and agents.
    pub seed: u64,
    pub scenario: ScenarioParams,
    pub training: TrainingConfig,
    pub sweep: Sweep,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "default".into(),
            schemes: vec![
                Scheme::Homad,
                Scheme::FullMad { levels: 4 },
                Scheme::FullMad { levels: 2 },
                Scheme::FullMaql { levels: 4 },
            ],
            replications: 1,
            seed: 1,
            scenario: ScenarioParams::default(),
            training: TrainingConfig::default(),
            sweep: Sweep::default(),
        }
    }
}

/// One cell of the sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    /// Label written to the `sweep_value` column.
    pub label: String,
    pub scenario: ScenarioParams,
    pub scheme: Scheme,
}

impl ExperimentSpec {
    pub fn from_text(text: &str) -> Result<Self, ExperimentError> {
        let spec: Self = toml::from_str(text).map_err(|e| {
            let Some(span) = e.span() else {
                return ExperimentError::Parse(e.message().to_string());
            };
            let line = text[..span.start].matches('\n').count();
            let source = text.lines().nth(line).unwrap_or_default().trim();
            ExperimentError::Parse(format!("line {} (`{source}`): {}", line + 1, e.message()))
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let value = toml::Value::try_from(self).expect("spec is always representable");
        let mut lines = Vec::new();
        flatten("", &value, &mut lines);
        lines.join("\n") + "\n"
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ExperimentError> {
        Ok(std::fs::write(path, self.to_text())?)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let invalid = |field: &str, why: &str| {
            Err(ExperimentError::Invalid {
                field: field.into(),
                reason: why.into(),
            })
        };
        if self.schemes.is_empty() {
            return invalid("schemes", "at least one scheme is required");
        }
        if self.replications == 0 {
            return invalid("replications", "must be at least 1");
        }
        self.training.validate().map_err(|e| ExperimentError::Invalid {
            field: "training".into(),
            reason: e.to_string(),
        })?;
        match self.sweep.axis {
            SweepAxis::None | SweepAxis::Scheme => {}
            _ if self.sweep.values.is_empty() => return invalid("sweep.values", "the sweep axis needs values"),
            SweepAxis::Requirements => {
                if let Some(v) = self.sweep.values.iter().find(|&&v| v >= self.sweep.requirements.len()) {
                    return invalid("sweep.values", &format!("requirement index {v} out of range"));
                }
            }
            SweepAxis::MmtcUsers => {
                if self.sweep.values.contains(&0) {
                    return invalid("sweep.values", "mMTC user counts must be positive");
                }
            }
            SweepAxis::Levels => {
                if self.sweep.values.contains(&0) {
                    return invalid("sweep.values", "level counts must be positive");
                }
            }
        }
        for point in self.points() {
            point.scenario.build(self.seed).map_err(|e| ExperimentError::Invalid {
                field: "scenario".into(),
                reason: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Sweep points in output order: scheme, then sweep value.
    pub fn points(&self) -> Vec<SweepPoint> {
        let values: Vec<Option<usize>> = match self.sweep.axis {
            SweepAxis::None | SweepAxis::Scheme => vec![None],
            _ => self.sweep.values.iter().copied().map(Some).collect(),
        };
        let mut out = Vec::new();
        for &scheme in &self.schemes {
            for &v in &values {
                let mut scenario = self.scenario.clone();
                let mut scheme = scheme;
                let label = match (self.sweep.axis, v) {
                    (SweepAxis::Requirements, Some(i)) => {
                        let r = self.sweep.requirements[i];
                        scenario.latency_ms = r.latency_ms;
                        scenario.error_probability = r.error_probability;
                        scenario.embb_rate_bps_hz = r.embb_rate_bps_hz;
                        i.to_string()
                    }
                    (SweepAxis::MmtcUsers, Some(m)) => {
                        scenario.mmtc_users = m;
                        m.to_string()
                    }
                    (SweepAxis::Levels, Some(l)) => {
                        scheme = match scheme {
                            Scheme::FullMad { .. } => Scheme::FullMad { levels: l },
                            Scheme::FullMaql { .. } => Scheme::FullMaql { levels: l },
                            Scheme::Homad => Scheme::Homad,
                        };
                        l.to_string()
                    }
                    _ => "-".into(),
                };
                out.push(SweepPoint {
                    label,
                    scenario,
                    scheme,
                });
            }
        }
        out
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<String>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        other => out.push(format!("{prefix} = {other}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_the_default_scenario() {
        let spec = ExperimentSpec::from_text("").unwrap();
        assert_eq!(spec, ExperimentSpec::default());
        assert_eq!(spec.scenario.mmtc_users, 4);
        assert_eq!(spec.training.episodes, 200);
    }

    #[test]
    fn single_override() {
        let spec = ExperimentSpec::from_text("scenario.mmtc_users = 8\n").unwrap();
        assert_eq!(spec.scenario.mmtc_users, 8);
        assert_eq!(
            spec.scenario,
            ScenarioParams {
                mmtc_users: 8,
                ..Default::default()
            }
        );
    }

    #[test]
    fn round_trip_is_identical() {
        let mut spec = ExperimentSpec::default();
        spec.scenario.error_probability = 1e-7;
        spec.scenario.rician_k_db = f64::INFINITY;
        spec.training.dqn.reward_scale = 3.3e-8;
        spec.sweep = Sweep {
            axis: SweepAxis::Requirements,
            values: vec![0, 2, 3],
            ..Default::default()
        };
        spec.schemes = vec![Scheme::FullMaql { levels: 2 }];
        let text = spec.to_text();
        assert!(text.lines().all(|l| l.contains(" = ")), "{text}");
        assert_eq!(ExperimentSpec::from_text(&text).unwrap(), spec);
    }

    #[test]
    fn errors_name_the_field() {
        let err = ExperimentSpec::from_text("scenario.mmtc_userz = 3")
            .unwrap_err()
            .to_string();
        assert!(err.contains("mmtc_userz"), "{err}");
        let err = ExperimentSpec::from_text("replications = 0").unwrap_err().to_string();
        assert!(err.contains("replications"), "{err}");
        let err = ExperimentSpec::from_text("schemes = [\"homad\", \"fullmad:x\"]")
            .unwrap_err()
            .to_string();
        assert!(err.contains("fullmad:x"), "{err}");
        let err = ExperimentSpec::from_text("sweep.axis = \"requirements\"\nsweep.values = [7]")
            .unwrap_err()
            .to_string();
        assert!(err.contains("sweep.values"), "{err}");
    }

    #[test]
    fn sweep_points() {
        let mut spec = ExperimentSpec::default();
        spec.sweep = Sweep {
            axis: SweepAxis::Levels,
            values: vec![2, 8],
            ..Default::default()
        };
        let pts = spec.points();
        assert_eq!(pts.len(), 8);
        assert_eq!(pts[2].scheme, Scheme::FullMad { levels: 2 });
        assert_eq!(pts[3].scheme, Scheme::FullMad { levels: 8 });
        spec.sweep = Sweep {
            axis: SweepAxis::Requirements,
            values: vec![3],
            ..Default::default()
        };
        let p = &spec.points()[0];
        assert_eq!(
            (
                p.scenario.latency_ms,
                p.scenario.error_probability,
                p.scenario.embb_rate_bps_hz
            ),
            (0.4, 1e-6, 8.0)
        );
    }
}
