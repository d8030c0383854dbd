use std::net::SocketAddr;

use clap::Parser;
use homad_server::{serve, AppState};
use tracing_subscriber::EnvFilter;

/// HOMAD experiment and power-allocation service.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Address to listen on.
    #[arg(long, env = "HOMAD_ADDR", default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Parallel training runs inside one experiment.
    #[arg(long, env = "HOMAD_WORKERS", default_value_t = 1)]
    workers: usize,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::from_default_env().add_directive("info".parse().unwrap()))
        .init();
    let args = Args::parse();
    let listener = tokio::net::TcpListener::bind(args.addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    serve(listener, AppState::new(args.workers)).await
}
