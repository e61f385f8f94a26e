use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::Context;
use clap::{Parser, Subcommand};
use hopaas_core::storage::{SqliteStore, Store};
use hopaas_server::ServerConfig;
use tracing_subscriber::EnvFilter;

#[derive(Debug, Parser)]
#[command(name = "hopaas-server", version, about = "Hyperparameter optimization coordination server")]
struct Cli {
    /// Address to listen on; port 0 picks a free port.
    #[arg(long, env = "HOPAAS_LISTEN", default_value = "127.0.0.1:8000")]
    listen: SocketAddr,
    #[arg(long, env = "HOPAAS_DATA_DIR", default_value = "./hopaas-data")]
    data_dir: PathBuf,
    /// Credential for the admin login and `Authorization: Bearer` admin calls.
    #[arg(long, env = "HOPAAS_ADMIN_TOKEN", hide_env_values = true)]
    admin_token: Option<String>,
    /// Log filter, e.g. `info` or `hopaas_server=debug`.
    #[arg(long, env = "HOPAAS_LOG", default_value = "info")]
    log_level: String,
    /// Directory of dashboard assets served at `/`.
    #[arg(long, env = "HOPAAS_STATIC_DIR")]
    static_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Issue a worker token directly against the data directory and print its secret.
    IssueToken {
        #[arg(long, default_value = "admin")]
        owner: String,
        #[arg(long, default_value_t = 86_400)]
        validity_seconds: u64,
    },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_new(&cli.log_level).context("bad --log-level")?)
        .with_writer(std::io::stderr)
        .init();

    if let Some(Command::IssueToken { owner, validity_seconds }) = &cli.command {
        let store = SqliteStore::open(&cli.data_dir)?;
        let issued = store.issue_token(owner, Duration::from_secs(*validity_seconds))?;
        println!("{} {}", issued.record.token_id, issued.secret);
        return Ok(());
    }

    let config = ServerConfig {
        data_dir: cli.data_dir,
        admin_credential: cli.admin_token,
        static_dir: cli.static_dir,
    };
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(cli.listen).await?;
        let addr = listener.local_addr()?;
        println!("listening on http://{addr}");
        tracing::info!(%addr, data_dir = %config.data_dir.display(), "server started");
        hopaas_server::serve(&config, listener, shutdown_signal()).await
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        if let Ok(mut s) = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            s.recv().await;
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}
