//! Ingestion service for geotagged water-quality readings.
//!
//! Readings arrive as JSON batches, are appended to a newline-delimited
//! log, deduplicated on `(device_id, timestamp, seq_origin)` and served
//! back as station summaries, per-station time series, CSV and a
//! server-sent event stream. See `docs/api.md` for the wire formats.

pub mod api;
pub mod store;

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use aquasonde_core::Season;
use thiserror::Error;
use tokio::net::TcpListener;

pub use api::{router, AppState, IngestResponse, Rejection};
pub use store::{IngestRecord, Recovery, Source, Store, StoreError};

/// Environment variable holding the optional bearer token.
pub const TOKEN_ENV: &str = "AQUASONDE_TOKEN";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub log_path: PathBuf,
    pub token: Option<String>,
    pub default_season: Season,
}

/// Opens the log and builds the shared state.
pub fn open_state(config: &ServiceConfig) -> Result<(Arc<AppState>, Recovery), StoreError> {
    let (store, recovery) = Store::open(&config.log_path)?;
    let state = AppState {
        store,
        token: config.token.clone().filter(|t| !t.is_empty()),
        default_season: config.default_season,
    };
    Ok((Arc::new(state), recovery))
}

/// Serves on an already bound listener until `shutdown` resolves.
pub async fn serve_on<S>(listener: TcpListener, state: Arc<AppState>, shutdown: S) -> std::io::Result<()>
where
    S: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}

/// Binds `config.listen` and serves until ctrl-c.
pub async fn serve(config: ServiceConfig) -> Result<(), ServeError> {
    let (state, recovery) = open_state(&config)?;
    log::info!(
        "recovered {} readings from {}",
        recovery.records,
        config.log_path.display()
    );
    let listener = TcpListener::bind(config.listen).await?;
    log::info!("listening on {}", listener.local_addr()?);
    serve_on(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
