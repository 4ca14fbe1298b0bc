//! JSON API over the loaded apps.
//!
//! - `GET /v1/rails/configs` lists the app ids.
//! - `POST /v1/chat` runs one turn, creating a session when none is given.

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use railgate_core::{RuntimeError, SequencedEvent, TurnTrace};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use crate::apps::AppRegistry;
use crate::sessions::{ChatSession, SessionStore};
use crate::ServerError;

#[derive(Debug)]
pub struct AppState {
    pub apps: AppRegistry,
    pub sessions: SessionStore,
}

impl AppState {
    pub fn new(apps: AppRegistry, sessions: SessionStore) -> Self {
        AppState { apps, sessions }
    }

    /// Rebuilds a session from its event log, as after a restart.
    pub fn restore_session(&self, config_id: &str, events: &[SequencedEvent]) -> Result<Arc<ChatSession>, ApiError> {
        let rt = self.apps.get(config_id).ok_or_else(|| ApiError::unknown_config(config_id))?;
        let state = rt.replay(events).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_log", e.to_string()))?;
        Ok(self.sessions.create(config_id, state))
    }

    pub fn session_events(&self, session_id: &str) -> Option<Vec<SequencedEvent>> {
        self.sessions.get(session_id).map(|s| s.lock().history.clone())
    }
}

#[derive(Debug, Deserialize)]
pub struct ChatRequest {
    pub config_id: String,
    #[serde(default)]
    pub session_id: Option<String>,
    pub message: String,
    #[serde(default)]
    pub trace: bool,
}

#[derive(Debug, Serialize)]
pub struct ChatResponse {
    pub session_id: String,
    pub messages: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<TurnTrace>,
}

#[derive(Debug, Serialize)]
pub struct ConfigInfo {
    pub id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn unknown_config(id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_config", format!("no config with id `{id}`"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/rails/configs", get(list_configs))
        .route("/v1/chat", post(chat))
        .with_state(state)
}

async fn list_configs(State(state): State<Arc<AppState>>) -> Json<Vec<ConfigInfo>> {
    Json(state.apps.ids().map(|id| ConfigInfo { id: id.to_string() }).collect())
}

fn parse_request(body: &[u8]) -> Result<ChatRequest, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        let status = if e.is_data() {
            StatusCode::UNPROCESSABLE_ENTITY
        } else {
            StatusCode::BAD_REQUEST
        };
        ApiError::new(status, "invalid_request", e.to_string())
    })
}

async fn chat(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<ChatResponse>, ApiError> {
    let req = parse_request(&body)?;
    let rt = state
        .apps
        .get(&req.config_id)
        .cloned()
        .ok_or_else(|| ApiError::unknown_config(&req.config_id))?;
    if req.message.trim().is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_message", "message is empty"));
    }
    let session = match &req.session_id {
        Some(id) => state
            .sessions
            .get(id)
            .filter(|s| s.config_id == req.config_id)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no live session `{id}`")))?,
        None => state.sessions.create(&req.config_id, rt.new_session()),
    };
    let session_id = session.id.clone();
    let message = req.message;
    let outcome = tokio::task::spawn_blocking(move || {
        let mut dialogue = session.lock();
        rt.run_turn(&mut dialogue, &message)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
    .map_err(|e| match e {
        RuntimeError::Llm(e) => ApiError::new(StatusCode::BAD_GATEWAY, "provider_error", e.to_string()),
        other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
    })?;
    Ok(Json(ChatResponse {
        session_id,
        messages: outcome.messages,
        trace: req.trace.then_some(outcome.trace),
    }))
}

/// Serves until `shutdown` resolves, sweeping expired sessions each minute.
pub async fn serve_on<F>(listener: TcpListener, state: Arc<AppState>, shutdown: F) -> Result<(), ServerError>
where
    F: Future<Output = ()> + Send + 'static,
{
    let sweeper = {
        let state = state.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_secs(60));
            loop {
                tick.tick().await;
                let gone = state.sessions.sweep();
                if gone > 0 {
                    tracing::debug!(gone, "expired sessions removed");
                }
            }
        })
    };
    let result = axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(ServerError::Serve);
    sweeper.abort();
    result
}

pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> Result<(), ServerError> {
    let listener = TcpListener::bind(addr)
        .await
        .map_err(|source| ServerError::Bind { addr, source })?;
    tracing::info!(%addr, apps = state.apps.len(), "listening");
    serve_on(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
