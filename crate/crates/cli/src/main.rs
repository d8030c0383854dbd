//! `homad`: run experiments, sweeps and summaries against a HOMAD service.
//!
//! With `--server` (or `HOMAD_SERVER`) the commands talk to that service;
//! otherwise an embedded server is started on a loopback port for the
//! duration of the command.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use homad_client::Client;
use homad_core::api::JobState;
use homad_core::experiment::{default_workers, ExperimentSpec, SweepAxis};
use homad_core::trainer::Scheme;

#[derive(Parser)]
#[command(name = "homad", version, about = "Energy-efficiency resource allocation experiments")]
struct Cli {
    /// Base URL of a running service; without it an embedded one is used.
    #[arg(long, global = true, env = "HOMAD_SERVER")]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every scheme once per replication at a single scenario point.
    Run(RunArgs),
    /// Train over the sweep axis given in the spec.
    Sweep(RunArgs),
    /// Convergence table from a finished output directory.
    Summarize { dir: PathBuf },
    /// Run the HTTP service in the foreground.
    Serve {
        #[arg(long, env = "HOMAD_ADDR", default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Spec file; defaults apply when omitted.
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces the spec's scheme list; repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    scheme: Vec<Scheme>,
    #[arg(long, default_value = "homad-out")]
    out: PathBuf,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    timeslots: Option<usize>,
    /// Power levels for the quantized schemes.
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
}

fn load_spec(args: &RunArgs, sweep: bool) -> Result<ExperimentSpec> {
    let mut spec = match &args.spec {
        Some(path) => ExperimentSpec::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if !args.scheme.is_empty() {
        spec.schemes = args.scheme.clone();
    }
    if let Some(l) = args.levels {
        for s in &mut spec.schemes {
            *s = match *s {
                Scheme::FullMad { .. } => Scheme::FullMad { levels: l },
                Scheme::FullMaql { .. } => Scheme::FullMaql { levels: l },
                Scheme::Homad => Scheme::Homad,
            };
        }
    }
    if let Some(e) = args.episodes {
        spec.training.episodes = e;
    }
    if let Some(t) = args.timeslots {
        spec.training.timeslots = t;
    }
    if let Some(r) = args.replications {
        spec.replications = r;
    }
    if sweep {
        if matches!(spec.sweep.axis, SweepAxis::None) {
            bail!("the spec has no sweep axis; set `sweep.axis` and `sweep.values` or use `homad run`");
        }
    } else {
        spec.sweep.axis = SweepAxis::None;
    }
    spec.validate()?;
    Ok(spec)
}

async fn connect(server: Option<String>) -> Result<Client> {
    let base = match server {
        Some(url) => url,
        None => {
            let addr = homad_server::spawn(([127, 0, 0, 1], 0).into(), default_workers()).await?;
            format!("http://{addr}")
        }
    };
    let client = Client::new(base);
    client
        .health()
        .await
        .with_context(|| format!("no HOMAD service at {}", client.base_url()))?;
    Ok(client)
}

fn absolute(path: &Path) -> Result<PathBuf> {
    Ok(if path.is_absolute() {
        path.to_path_buf()
    } else {
        std::env::current_dir()?.join(path)
    })
}

async fn run(client: &Client, args: &RunArgs, sweep: bool) -> Result<()> {
    let spec = load_spec(args, sweep)?;
    let out = absolute(&args.out)?;
    std::fs::create_dir_all(&out)?;
    let job = client.submit(&spec.to_text(), Some(&out.to_string_lossy())).await?;
    eprintln!("job {} queued: {} training runs", job.id, job.total);
    let job = client
        .wait(job.id, Duration::from_millis(500), |j| {
            eprintln!("job {}: {:?} {}/{}", j.id, j.state, j.done, j.total)
        })
        .await?;
    if job.state != JobState::Completed {
        bail!("job {} failed: {}", job.id, job.error.unwrap_or_default());
    }
    // a remote service writes into its own filesystem; keep a local copy of the rows
    let local = out.join("results.csv");
    if !local.exists() {
        std::fs::write(&local, client.results_csv(job.id).await?)?;
    }
    println!(
        "{:<12} {:>8} {:>6} {:>14} {:>8} {:>9}  status",
        "scheme", "sweep", "seed", "avg_ee", "conv_ep", "viol"
    );
    for r in &job.rows {
        let conv = r.convergence_episode.map_or("-".to_string(), |e| e.to_string());
        println!(
            "{:<12} {:>8} {:>6} {:>14.6e} {:>8} {:>9.4}  {}",
            r.scheme.to_string(),
            r.sweep_value,
            r.seed,
            r.avg_ee,
            conv,
            r.violation_rate,
            r.status
        );
    }
    eprintln!("results in {}", local.display());
    Ok(())
}

async fn summarize(client: &Client, dir: &Path) -> Result<()> {
    let rows = client.summarize(&absolute(dir)?.to_string_lossy()).await?;
    println!(
        "{:<12} {:>5} {:>14} {:>12} {:>14}",
        "scheme", "runs", "s/episode", "episodes", "conv_time_s"
    );
    for r in rows {
        let eps = r.convergence_episodes.map_or("-".into(), |e| format!("{e:.1}"));
        let secs = r.convergence_seconds.map_or("-".into(), |s| format!("{s:.2}"));
        println!(
            "{:<12} {:>5} {:>14.4} {:>12} {:>14}",
            r.scheme.to_string(),
            r.runs,
            r.mean_episode_seconds,
            eps,
            secs
        );
    }
    Ok(())
}

#[tokio::main]
async fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Serve { addr } => {
            let listener = tokio::net::TcpListener::bind(addr).await?;
            eprintln!("listening on {}", listener.local_addr()?);
            homad_server::serve(listener, homad_server::AppState::new(default_workers())).await?;
        }
        Command::Run(args) => run(&connect(cli.server.clone()).await?, args, false).await?,
        Command::Sweep(args) => run(&connect(cli.server.clone()).await?, args, true).await?,
        Command::Summarize { dir } => summarize(&connect(cli.server.clone()).await?, dir).await?,
    }
    Ok(())
}
