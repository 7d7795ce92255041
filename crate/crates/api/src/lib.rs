//! HTTP JSON service for campaign management, ingestion, monitoring,
//! guidance and export, plus a small blocking client for it.

pub mod client;
pub mod error;
mod routes;

use std::future::Future;
use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread::JoinHandle;

use campaignd_core::store::log::LogError;
use campaignd_core::{Store, StoreError, StoreOptions};
use thiserror::Error;
use tokio::sync::oneshot;

pub use client::{Client, ClientError};
pub use error::ApiError;
pub use routes::{
    router, MeasurementBatch, PowerBody, SensorsBody, StatusBody, DEFAULT_CELL_DEG, DEFAULT_K, PLUGIN_CHECKSUM_HEADER,
    PLUGIN_ID_HEADER, PLUGIN_SENSORS_HEADER, PLUGIN_VERSION_HEADER, VOLUNTEER_HEADER,
};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: String, source: std::io::Error },
    #[error("refusing to start: log {path} is corrupt after seq {last_valid_seq}: {reason}")]
    CorruptLog { path: PathBuf, last_valid_seq: u64, reason: String },
    #[error(transparent)]
    Store(StoreError),
    #[error("server failure: {0}")]
    Io(#[from] std::io::Error),
}

/// Opens a data directory, reporting a damaged log as [`ServeError::CorruptLog`].
pub fn open_store(data_dir: &Path, options: StoreOptions) -> Result<Store, ServeError> {
    Store::open(data_dir, options).map_err(|e| match e {
        StoreError::Log(LogError::Corrupt { path, last_valid_seq, reason }) => {
            ServeError::CorruptLog { path, last_valid_seq, reason }
        }
        other => ServeError::Store(other),
    })
}

pub fn bind(addr: &str) -> Result<TcpListener, ServeError> {
    let listener = TcpListener::bind(addr).map_err(|source| ServeError::BindFailure { addr: addr.to_owned(), source })?;
    listener.set_nonblocking(true)?;
    Ok(listener)
}

/// Serves `store` on an already bound listener until `shutdown` resolves.
pub async fn serve_on(
    listener: TcpListener,
    store: Arc<Store>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let listener = tokio::net::TcpListener::from_std(listener)?;
    axum::serve(listener, router(store)).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

/// Replays `data_dir`, binds `bind_addr` and serves until `shutdown` resolves.
pub async fn serve(
    bind_addr: &str,
    data_dir: &Path,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let store = Arc::new(open_store(data_dir, StoreOptions::default())?);
    let listener = bind(bind_addr)?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    serve_on(listener, store, shutdown).await
}

/// A service running on its own thread and runtime; stops when dropped.
pub struct RunningServer {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<Result<(), ServeError>>>,
}

impl RunningServer {
    pub fn spawn(store: Arc<Store>, bind_addr: &str) -> Result<Self, ServeError> {
        let listener = bind(bind_addr)?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(4).enable_all().build()?;
        let thread = std::thread::spawn(move || {
            runtime.block_on(serve_on(listener, store, async {
                let _ = rx.await;
            }))
        });
        Ok(RunningServer { addr, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) -> Result<(), ServeError> {
        self.shutdown_and_join()
    }

    fn shutdown_and_join(&mut self) -> Result<(), ServeError> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(std::io::Error::other("server thread panicked").into())),
            None => Ok(()),
        }
    }
}

impl Drop for RunningServer {
    fn drop(&mut self) {
        let _ = self.shutdown_and_join();
    }
}
