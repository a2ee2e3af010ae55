//! Service startup and shutdown.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use embedscape::query::{BuiltinTextProvider, EmbeddingProvider, RemoteProvider, DEFAULT_PROVIDER_TIMEOUT};
use embedscape::store::Store;
use embedscape::Registry;

use crate::api::{router, AppState, Providers};
use crate::jobs::Jobs;

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub host: String,
    pub port: u16,
    pub data_dir: PathBuf,
    /// Base URL of a remote embedding provider, registered as `remote`.
    pub provider_url: Option<String>,
    pub provider_timeout: Duration,
}

pub fn providers(provider_url: Option<&str>, timeout: Duration) -> embedscape::Result<Providers> {
    let mut p: Providers = Providers::new();
    p.insert("builtin".into(), Arc::new(BuiltinTextProvider) as Arc<dyn EmbeddingProvider>);
    if let Some(url) = provider_url {
        p.insert("remote".into(), Arc::new(RemoteProvider::new("remote", url, timeout)?));
    }
    Ok(p)
}

pub fn state(config: &ServeConfig) -> embedscape::Result<AppState> {
    let store = Store::open(&config.data_dir, Registry::with_defaults())?;
    Ok(AppState {
        store: Arc::new(store),
        jobs: Jobs::new(),
        providers: Arc::new(providers(config.provider_url.as_deref(), config.provider_timeout)?),
    })
}

impl ServeConfig {
    pub fn new(data_dir: PathBuf) -> Self {
        ServeConfig {
            host: "127.0.0.1".into(),
            port: 8080,
            data_dir,
            provider_url: None,
            provider_timeout: DEFAULT_PROVIDER_TIMEOUT,
        }
    }
}

/// Serves until `shutdown` resolves, then waits for running jobs.
/// `on_bound` sees the actual address (useful with port 0).
pub async fn serve(
    config: ServeConfig,
    on_bound: impl FnOnce(SocketAddr),
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), String> {
    // The remote provider owns a blocking HTTP client, which must be created
    // and dropped off the async runtime.
    let cfg = config.clone();
    let state = tokio::task::spawn_blocking(move || state(&cfg))
        .await
        .map_err(|e| e.to_string())?
        .map_err(|e| e.to_string())?;
    let providers = state.providers.clone();
    let result = run(config, state, on_bound, shutdown).await;
    let _ = tokio::task::spawn_blocking(move || drop(providers)).await;
    result
}

async fn run(
    config: ServeConfig,
    state: AppState,
    on_bound: impl FnOnce(SocketAddr),
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), String> {
    let addr = format!("{}:{}", config.host, config.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| format!("cannot listen on {addr}: {e}"))?;
    let local = listener.local_addr().map_err(|e| e.to_string())?;
    tracing::info!(%local, data_dir = %config.data_dir.display(), "listening");
    on_bound(local);
    let jobs = state.jobs.clone();
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| e.to_string())?;
    tracing::info!(active = jobs.active(), "shutting down, waiting for jobs");
    let idle = tokio::task::spawn_blocking(move || jobs.wait_idle(Duration::from_secs(60)))
        .await
        .unwrap_or(false);
    if !idle {
        tracing::warn!("jobs still running at exit");
    }
    Ok(())
}

/// Resolves on Ctrl-C or SIGTERM. Handlers are installed when this is
/// called, not when the future is first polled, so signals that arrive
/// during startup are not lost. Must run inside a runtime.
pub fn shutdown_signal() -> impl std::future::Future<Output = ()> + Send + 'static {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let int = signal(SignalKind::interrupt());
        let term = signal(SignalKind::terminate());
        async move {
            let recv = |s: std::io::Result<tokio::signal::unix::Signal>| async move {
                match s {
                    Ok(mut s) => {
                        s.recv().await;
                    }
                    Err(_) => std::future::pending::<()>().await,
                }
            };
            tokio::select! {
                _ = recv(int) => {},
                _ = recv(term) => {},
            }
        }
    }
    #[cfg(not(unix))]
    async {
        let _ = tokio::signal::ctrl_c().await;
    }
}
