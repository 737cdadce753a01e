//! HTTP API over the risk engine: patient view-models, predictions,
//! explanations, ranges, recommendations, evidence and chat sessions with
//! interaction logging.

pub mod answers;
pub mod api;
pub mod config;
pub mod engine;
pub mod events;
pub mod sessions;

use std::net::SocketAddr;
use std::sync::Arc;

use riskscope_core::router::{ChatClient, HttpChatClient};
use thiserror::Error;

pub use api::{router, AppState, ChatResponse, ErrorBody};
pub use config::ServiceConfig;
pub use engine::{Engine, EngineError};
pub use events::{EventKind, EventLog, InteractionEvent};

#[derive(Debug, Error)]
pub enum StartupError {
    #[error("invalid service config: {0}")]
    Config(String),
    #[error("artifact `{name}` failed validation: {message}")]
    Artifact { name: &'static str, message: String },
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("server error: {0}")]
    Server(#[from] std::io::Error),
}

/// Loads every artifact named in `config` and builds the shared state. The
/// language model client comes from the environment and is optional.
pub fn load_state(config: &ServiceConfig) -> Result<AppState, StartupError> {
    let engine = Engine::load(config)?;
    let client = HttpChatClient::from_env().map(|c| Arc::new(c) as Arc<dyn ChatClient>);
    if client.is_none() {
        tracing::warn!("no language model configured; unmatched queries get the unavailable message");
    }
    Ok(AppState::new(engine, EventLog::new(&config.log_dir), client))
}

pub async fn serve(state: AppState, addr: SocketAddr) -> Result<(), StartupError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| StartupError::Bind { addr, source })?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state)).await?;
    Ok(())
}
