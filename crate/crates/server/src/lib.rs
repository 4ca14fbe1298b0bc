//! HTTP chat service and command-line tools for guardrail apps.

pub mod api;
pub mod apps;
pub mod cli;
pub mod sessions;

use std::net::SocketAddr;
use std::path::PathBuf;

use railgate_core::ConfigError;
use thiserror::Error;

pub use api::{router, serve, serve_on, ApiError, AppState, ChatRequest, ChatResponse};
pub use apps::AppRegistry;
pub use sessions::{ChatSession, SessionStore, DEFAULT_SESSION_TTL};

#[derive(Debug, Error)]
pub enum ServerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("no app found in {}", .0.display())]
    NoApps(PathBuf),
    #[error("two apps share the id `{0}`")]
    DuplicateApp(String),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server error: {0}")]
    Serve(std::io::Error),
}
