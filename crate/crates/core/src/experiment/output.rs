use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::agents::QTable;
use crate::nn::NetworkParams;
use crate::trainer::{Scheme, TrainingLog};

/// One training run in `results.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub scheme: Scheme,
    pub sweep_axis: String,
    pub sweep_value: String,
    pub seed: u64,
    /// Mean reward over the final convergence window, bits/J.
    pub avg_ee: f64,
    pub convergence_episode: Option<usize>,
    pub episodes: usize,
    /// Violation rate over the final convergence window.
    pub violation_rate: f64,
    pub optimizer_failures: u64,
    /// `ok`, or the error that stopped the run.
    pub status: String,
}

/// Per-run wall time, kept apart from `results.csv` so results stay reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub scheme: Scheme,
    pub sweep_value: String,
    pub seed: u64,
    pub episodes: usize,
    pub mean_episode_seconds: f64,
    pub convergence_episode: Option<usize>,
}

/// Per-scheme convergence table: time per episode, episodes to converge and
/// their product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSummary {
    pub scheme: Scheme,
    pub runs: usize,
    pub mean_episode_seconds: f64,
    /// Mean over runs that converged.
    pub convergence_episodes: Option<f64>,
    pub convergence_seconds: Option<f64>,
}

/// Row types with a fixed CSV header.
pub trait CsvRecord: Serialize {
    const HEADER: &'static [&'static str];
}

impl CsvRecord for ResultRow {
    const HEADER: &'static [&'static str] = &[
        "scenario",
        "scheme",
        "sweep_axis",
        "sweep_value",
        "seed",
        "avg_ee",
        "convergence_episode",
        "episodes",
        "violation_rate",
        "optimizer_failures",
        "status",
    ];
}

impl CsvRecord for TimingRow {
    const HEADER: &'static [&'static str] = &[
        "scheme",
        "sweep_value",
        "seed",
        "episodes",
        "mean_episode_seconds",
        "convergence_episode",
    ];
}

impl CsvRecord for ConvergenceSummary {
    const HEADER: &'static [&'static str] = &[
        "scheme",
        "runs",
        "mean_episode_seconds",
        "convergence_episodes",
        "convergence_seconds",
    ];
}

/// Writes a header and one line per row. Floats use the shortest exact form.
pub fn emit_csv<T: CsvRecord, W: Write>(rows: &[T], out: W) -> Result<(), ExperimentError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(T::HEADER)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, ExperimentError> {
    read_rows(path)
}

pub fn read_timings(path: &Path) -> Result<Vec<TimingRow>, ExperimentError> {
    read_rows(path)
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, ExperimentError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Per-episode trace of one run.
pub fn write_trace(log: &TrainingLog, path: &Path) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    let agents = log.episodes.first().map_or(0, |e| e.mean_loss.len());
    let mut header: Vec<String> = ["episode", "epsilon", "mean_reward", "mean_zeta", "violation_rate"]
        .map(String::from)
        .to_vec();
    header.extend((0..agents).map(|m| format!("loss_agent{m}")));
    w.write_record(&header)?;
    for e in &log.episodes {
        let mut rec = vec![
            e.episode.to_string(),
            e.epsilon.to_string(),
            e.mean_reward.to_string(),
            e.mean_zeta.to_string(),
        ];
        rec.push(e.violation_rate.to_string());
        rec.extend(e.mean_loss.iter().map(|l| l.map_or(String::new(), |v| v.to_string())));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub enum ModelRef<'a> {
    Network(&'a NetworkParams),
    Table(&'a QTable),
}

/// Networks use the binary format of [`NetworkParams::write_to`]; Q-tables
/// are CSV (`state` as `-`-joined bins, then one column per action).
pub fn write_model(model: ModelRef<'_>, path: &Path) -> Result<(), ExperimentError> {
    match model {
        ModelRef::Network(p) => {
            let mut f = std::io::BufWriter::new(File::create(path)?);
            p.write_to(&mut f)?;
            f.flush()?;
        }
        ModelRef::Table(t) => {
            let mut w = csv::Writer::from_path(path)?;
            let mut header = vec!["state".to_string()];
            header.extend((0..t.n_actions()).map(|a| format!("q{a}")));
            w.write_record(&header)?;
            let mut rows: Vec<_> = t.iter().collect();
            rows.sort_by(|a, b| a.0.cmp(b.0));
            for (key, values) in rows {
                let mut rec = vec![key.iter().map(u16::to_string).collect::<Vec<_>>().join("-")];
                rec.extend(values.iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Groups timing rows by scheme.
pub fn summarize_convergence(rows: &[TimingRow]) -> Vec<ConvergenceSummary> {
    let mut groups: BTreeMap<Scheme, Vec<&TimingRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.scheme).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(scheme, rs)| {
            let n = rs.len() as f64;
            let per_episode = rs.iter().map(|r| r.mean_episode_seconds).sum::<f64>() / n;
            let conv: Vec<f64> = rs
                .iter()
                .filter_map(|r| r.convergence_episode.map(|e| e as f64))
                .collect();
            let episodes = (!conv.is_empty()).then(|| conv.iter().sum::<f64>() / conv.len() as f64);
            ConvergenceSummary {
                scheme,
                runs: rs.len(),
                mean_episode_seconds: per_episode,
                convergence_episodes: episodes,
                convergence_seconds: episodes.map(|e| e * per_episode),
            }
        })
        .collect()
}

/// Reads `timings.csv` from an output directory and summarizes it.
pub fn summarize_dir(dir: &Path) -> Result<Vec<ConvergenceSummary>, ExperimentError> {
    Ok(summarize_convergence(&read_timings(&dir.join("timings.csv"))?))
}
