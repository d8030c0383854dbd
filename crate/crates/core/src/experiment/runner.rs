use std::fs::{self, File};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::output::{emit_csv, write_model, write_trace, ModelRef, ResultRow, TimingRow};
use super::{ExperimentError, ExperimentSpec, SweepAxis, SweepPoint};
use crate::trainer::{run_training, TrainedModels, TrainingLog, TrainingRun};

/// Outcome of one (sweep point, replication) run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub row: ResultRow,
    pub timing: Option<TimingRow>,
    pub run: Option<TrainingRun>,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<TimingRow>,
    pub logs: Vec<TrainingLog>,
}

fn axis_name(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::None => "none",
        SweepAxis::Requirements => "requirements",
        SweepAxis::MmtcUsers => "mmtc_users",
        SweepAxis::Levels => "levels",
        SweepAxis::Scheme => "scheme",
    }
}

/// Trains one sweep point for one replication. Failures become a row with a
/// non-`ok` status instead of an error.
pub fn run_point(spec: &ExperimentSpec, point: &SweepPoint, replication: usize) -> RunReport {
    let seed = spec.seed + replication as u64;
    let mut row = ResultRow {
        scenario: spec.name.clone(),
        scheme: point.scheme,
        sweep_axis: axis_name(spec.sweep.axis).into(),
        sweep_value: point.label.clone(),
        seed,
        avg_ee: 0.0,
        convergence_episode: None,
        episodes: spec.training.episodes,
        violation_rate: 1.0,
        optimizer_failures: 0,
        status: "ok".into(),
    };
    let training = crate::trainer::TrainingConfig {
        seed,
        ..spec.training.clone()
    };
    let result = point
        .scenario
        .build(seed)
        .map_err(|e| e.to_string())
        .and_then(|net| run_training(&net, point.scheme, &training).map_err(|e| e.to_string()));
    match result {
        Ok(run) => {
            let log = &run.log;
            let w = spec.training.convergence_window.clamp(1, log.episodes.len());
            let tail = &log.episodes[log.episodes.len() - w..];
            row.avg_ee = log.final_reward;
            row.convergence_episode = log.convergence_episode;
            row.violation_rate = tail.iter().map(|e| e.violation_rate).sum::<f64>() / w as f64;
            row.optimizer_failures = log.optimizer_failures;
            let timing = TimingRow {
                scheme: point.scheme,
                sweep_value: point.label.clone(),
                seed,
                episodes: log.episodes.len(),
                mean_episode_seconds: run.episode_seconds.iter().sum::<f64>() / run.episode_seconds.len() as f64,
                convergence_episode: log.convergence_episode,
            };
            RunReport {
                row,
                timing: Some(timing),
                run: Some(run),
            }
        }
        Err(e) => {
            row.status = format!("error: {e}");
            RunReport {
                row,
                timing: None,
                run: None,
            }
        }
    }
}

fn file_stem(row: &ResultRow) -> String {
    format!(
        "{}_{}_{}",
        row.scheme.to_string().replace(':', "-l"),
        row.sweep_value,
        row.seed
    )
}

fn write_artifacts(report: &RunReport, dir: &Path) -> Result<(), ExperimentError> {
    let Some(run) = &report.run else { return Ok(()) };
    let stem = file_stem(&report.row);
    write_trace(&run.log, &dir.join("traces").join(format!("{stem}.csv")))?;
    match &run.models {
        TrainedModels::Dqn(nets) => {
            for (m, net) in nets.iter().enumerate() {
                write_model(
                    ModelRef::Network(net),
                    &dir.join("models").join(format!("{stem}_agent{m}.bin")),
                )?;
            }
        }
        TrainedModels::Tabular(tables) => {
            for (m, t) in tables.iter().enumerate() {
                write_model(
                    ModelRef::Table(t),
                    &dir.join("models").join(format!("{stem}_agent{m}.qtable.csv")),
                )?;
            }
        }
    }
    Ok(())
}

/// Runs every sweep point and replication on `workers` threads.
///
/// With `out_dir`, writes `spec.toml`, `results.csv`, `timings.csv`,
/// `traces/*.csv` and `models/*`. Rows come back in spec order: scheme, sweep
/// value, seed. `progress(done, total)` is called after each run.
pub fn run_experiment(
    spec: &ExperimentSpec,
    out_dir: Option<&Path>,
    workers: usize,
    progress: &(dyn Fn(usize, usize) + Sync),
) -> Result<ExperimentOutput, ExperimentError> {
    spec.validate()?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir.join("traces"))?;
        fs::create_dir_all(dir.join("models"))?;
        spec.save(&dir.join("spec.toml"))?;
    }
    let jobs: Vec<(SweepPoint, usize)> = spec
        .points()
        .into_iter()
        .flat_map(|p| (0..spec.replications).map(move |r| (p.clone(), r)))
        .collect();
    let total = jobs.len();
    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<RunReport>>> = Mutex::new(vec![None; total]);
    let first_error: Mutex<Option<ExperimentError>> = Mutex::new(None);

    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, total.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= total {
                    break;
                }
                let (point, rep) = &jobs[i];
                let report = run_point(spec, point, *rep);
                if let Some(dir) = out_dir {
                    if let Err(e) = write_artifacts(&report, dir) {
                        first_error.lock().unwrap().get_or_insert(e);
                    }
                }
                slots.lock().unwrap()[i] = Some(report);
                progress(done.fetch_add(1, Ordering::Relaxed) + 1, total);
            });
        }
    });
    if let Some(e) = first_error.into_inner().unwrap() {
        return Err(e);
    }

    let mut out = ExperimentOutput::default();
    for report in slots.into_inner().unwrap().into_iter().flatten() {
        out.rows.push(report.row);
        out.timings.extend(report.timing);
        if let Some(run) = report.run {
            out.logs.push(run.log);
        }
    }
    if let Some(dir) = out_dir {
        emit_csv(&out.rows, File::create(dir.join("results.csv"))?)?;
        emit_csv(&out.timings, File::create(dir.join("timings.csv"))?)?;
    }
    Ok(out)
}
