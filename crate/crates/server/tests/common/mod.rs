#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use railgate_core::embedding::HashingEmbedder;
use railgate_core::llm::{FnLlm, LlmTask, TaskKind};
use railgate_core::{parse_config, runtime_for, RailsApp, Runtime};
use railgate_server::{router, AppRegistry, AppState, SessionStore};
use serde_json::Value;
use tower::ServiceExt;

pub fn apps_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../apps")
}

pub fn all_apps() -> AppRegistry {
    AppRegistry::discover(&apps_dir()).unwrap()
}

pub fn app_state(apps: AppRegistry) -> Arc<AppState> {
    Arc::new(AppState::new(apps, SessionStore::default()))
}

pub const ECHO_APP: &str = r#"define user ask question
  "msg-example"

define flow qa
  user ask question
  bot answer question
"#;

/// The quoted text of the last `user "..."` line in a prompt.
pub fn last_user(prompt: &str) -> String {
    prompt
        .lines()
        .rev()
        .find_map(|l| l.trim().strip_prefix("user \"").and_then(|r| r.strip_suffix('"')))
        .unwrap_or_default()
        .to_string()
}

/// An app whose answers depend on the whole conversation so far: every
/// reply names the current message and counts the earlier ones visible in
/// the prompt.
pub fn echo_runtime(id: &str) -> Runtime {
    let yaml = format!("id: {id}\nmodel:\n  engine: mock\nembeddings:\n  engine: mock\n  dim: 32\n");
    let config = parse_config(Path::new(id), &yaml, &[("echo.co".to_string(), ECHO_APP.to_string())]).unwrap();
    let llm = Arc::new(FnLlm::new(|task: &LlmTask| {
        Ok(match task.kind {
            TaskKind::GenerateUserIntent => "ask question".to_string(),
            TaskKind::GenerateBotMessage => {
                let seen = task.prompt.matches("user \"msg-").count();
                format!("\"{} after {seen}\"", last_user(&task.prompt))
            }
            _ => "bot answer question".to_string(),
        })
    }));
    let app = RailsApp::with_providers(config, llm, Arc::new(HashingEmbedder::new(32))).unwrap();
    runtime_for(app).unwrap()
}

pub async fn send(app: &Router, method: &str, uri: &str, body: &str) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let json = serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&bytes)));
    (status, json)
}

pub async fn chat(app: &Router, body: Value) -> (StatusCode, Value) {
    send(app, "POST", "/v1/chat", &body.to_string()).await
}

pub fn router_for(state: &Arc<AppState>) -> Router {
    router(state.clone())
}

/// Violations of the named schema in `schemas/`, empty when `doc` conforms.
pub fn schema_errors(name: &str, doc: &Value) -> Vec<String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(format!("{name}.schema.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let compiled = jsonschema::JSONSchema::compile(&schema).unwrap();
    let errors = match compiled.validate(doc) {
        Ok(()) => Vec::new(),
        Err(errors) => errors.map(|e| format!("{e} at {}", e.instance_path)).collect(),
    };
    errors
}

pub fn assert_schema(name: &str, doc: &Value) {
    let errors = schema_errors(name, doc);
    assert!(errors.is_empty(), "{name}: {errors:?}\n{doc}");
}
