//! HTTP coordination server: worker endpoints for ask, tell and
//! should_prune, read APIs for monitoring, and token management.

pub mod error;
pub mod http;
pub mod service;
pub mod wire;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use hopaas_core::storage::{SqliteStore, Store};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub use error::{ApiError, UNAUTHORIZED_BODY};
pub use http::{router, AppState};
pub use service::{trial_rng, Coordinator, Principal};

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    pub data_dir: PathBuf,
    pub admin_credential: Option<String>,
    pub static_dir: Option<PathBuf>,
}

pub fn build_app(store: Arc<dyn Store>, config: &ServerConfig) -> axum::Router {
    let coordinator = Arc::new(Coordinator::new(store));
    let state = AppState::new(coordinator, config.admin_credential.clone());
    router(state, config.static_dir.clone())
}

/// Opens the store under `config.data_dir` and serves until `shutdown` resolves.
pub async fn serve(
    config: &ServerConfig,
    listener: TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> anyhow::Result<()> {
    let store = Arc::new(SqliteStore::open(&config.data_dir)?);
    axum::serve(listener, build_app(store, config)).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

/// A server running on the current tokio runtime, for embedding and tests.
#[derive(Debug)]
pub struct RunningServer {
    pub addr: SocketAddr,
    pub store: Arc<dyn Store>,
    shutdown: Option<oneshot::Sender<()>>,
    handle: JoinHandle<std::io::Result<()>>,
}

impl RunningServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn stop(mut self) -> anyhow::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        (&mut self.handle).await??;
        Ok(())
    }
}

pub async fn start(store: Arc<dyn Store>, config: &ServerConfig, listen: SocketAddr) -> anyhow::Result<RunningServer> {
    let listener = TcpListener::bind(listen).await?;
    let addr = listener.local_addr()?;
    let app = build_app(store.clone(), config);
    let (tx, rx) = oneshot::channel::<()>();
    let handle = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = rx.await;
            })
            .await
    });
    Ok(RunningServer { addr, store, shutdown: Some(tx), handle })
}
