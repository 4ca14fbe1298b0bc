//! A loaded application: config, providers and retrieval indexes.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use crate::config::{load_config, ConfigError, Engine, RailsAppConfig, StubAction};
use crate::embedding::{
    build_indexes, EmbeddingError, EmbeddingProvider, FormMatcher, HashingEmbedder, HttpEmbedder, IndexSet,
    EMBEDDINGS_API_KEY_ENV,
};
use crate::llm::{Gateway, HttpLlm, LlmProvider, MockLlm, LLM_API_KEY_ENV};
use crate::runtime::{ActionOutput, ActionRegistry, DuplicateAction, Runtime, RuntimeError, LAST_USER_MESSAGE};
use crate::value::Value;

pub struct RailsApp {
    pub config: RailsAppConfig,
    pub indexes: IndexSet,
    pub forms: FormMatcher,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub gateway: Gateway,
}

impl std::fmt::Debug for RailsApp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RailsApp").field("id", &self.config.id).finish_non_exhaustive()
    }
}

impl RailsApp {
    /// Creates the providers named in the config.
    pub fn build(config: RailsAppConfig) -> Result<Self, ConfigError> {
        let llm = llm_from_config(&config)?;
        let embedder = embedder_from_config(&config)?;
        Self::with_providers(config, llm, embedder)
    }

    pub fn with_providers(
        config: RailsAppConfig,
        llm: Arc<dyn LlmProvider>,
        embedder: Arc<dyn EmbeddingProvider>,
    ) -> Result<Self, ConfigError> {
        let indexes = build_indexes(&config.script, embedder.as_ref(), config.retrieval.max_per_form)?
            .with_knowledge(&config.knowledge, embedder.as_ref())?;
        let forms = FormMatcher::build(config.script.user_forms(), embedder.as_ref())?;
        let gateway = Gateway::new(llm, config.temperatures.clone());
        Ok(RailsApp {
            config,
            indexes,
            forms,
            embedder,
            gateway,
        })
    }

    /// The knowledge chunks nearest to `query`, joined by blank lines.
    pub fn retrieve_chunks(&self, query: &str) -> Result<String, EmbeddingError> {
        if query.trim().is_empty() {
            return Ok(String::new());
        }
        let hits = self
            .indexes
            .knowledge
            .knn(query, self.config.knowledge_top_k, self.embedder.as_ref())?;
        Ok(hits.iter().map(|(item, _)| item.text.as_str()).collect::<Vec<_>>().join("\n\n"))
    }

    pub(crate) fn register_stubs(&self, registry: &mut ActionRegistry) -> Result<(), DuplicateAction> {
        for (name, stub) in &self.config.stubs {
            let stub = stub.clone();
            registry.register(name, move |ctx| {
                let query = ctx.text("query", LAST_USER_MESSAGE).unwrap_or_default();
                Ok(ActionOutput::from(stub_response(&stub, &query)))
            })?;
        }
        Ok(())
    }
}

fn stub_response(stub: &StubAction, query: &str) -> Value {
    let query = query.to_lowercase();
    stub.responses
        .iter()
        .find(|(key, _)| query.contains(&key.to_lowercase()))
        .map(|(_, v)| v.clone())
        .unwrap_or_else(|| stub.default.clone())
}

fn config_rule(config: &RailsAppConfig, message: String) -> ConfigError {
    ConfigError::Rule {
        path: config.dir.join(crate::config::CONFIG_FILE),
        message,
    }
}

pub fn llm_from_config(config: &RailsAppConfig) -> Result<Arc<dyn LlmProvider>, ConfigError> {
    let m = &config.model;
    match m.engine {
        Engine::Mock => {
            let mut rules = m.rules.clone();
            if let Some(path) = &m.mock_rules {
                let text = std::fs::read_to_string(config.dir.join(path)).map_err(|source| ConfigError::Io {
                    path: config.dir.join(path),
                    source,
                })?;
                let file = MockLlm::from_yaml(&text).map_err(|e| config_rule(config, format!("{}: {e}", path.display())))?;
                rules.extend(file.into_rules());
            }
            Ok(Arc::new(MockLlm::new(rules)))
        }
        Engine::Http => {
            let endpoint = m.endpoint.clone().unwrap_or_default();
            let model = m.model.clone().unwrap_or_default();
            Ok(Arc::new(
                HttpLlm::new(endpoint, model, Duration::from_secs(m.timeout_secs))
                    .with_api_key(std::env::var(LLM_API_KEY_ENV).ok()),
            ))
        }
    }
}

pub fn embedder_from_config(config: &RailsAppConfig) -> Result<Arc<dyn EmbeddingProvider>, ConfigError> {
    let e = &config.embeddings;
    match e.engine {
        Engine::Mock => {
            let mut embedder = HashingEmbedder::new(e.dim);
            if let Some(path) = &e.overrides {
                let full = config.dir.join(path);
                let text = std::fs::read_to_string(&full).map_err(|source| ConfigError::Io {
                    path: full.clone(),
                    source,
                })?;
                let map: BTreeMap<String, Vec<f64>> = serde_yaml::from_str(&text)
                    .map_err(|err| config_rule(config, format!("{}: {err}", path.display())))?;
                if let Some((text, v)) = map.iter().find(|(_, v)| v.len() != e.dim) {
                    return Err(config_rule(
                        config,
                        format!("override for {text:?} has {} values, expected {}", v.len(), e.dim),
                    ));
                }
                embedder = embedder.with_overrides(map);
            }
            Ok(Arc::new(embedder))
        }
        Engine::Http => Ok(Arc::new(
            HttpEmbedder::new(
                e.endpoint.clone().unwrap_or_default(),
                e.model.clone().unwrap_or_default(),
                e.dim,
                Duration::from_secs(e.timeout_secs),
            )
            .with_api_key(std::env::var(EMBEDDINGS_API_KEY_ENV).ok()),
        )),
    }
}

/// Loads the app in `dir` and wires the built-in and stub actions.
pub fn load_app(dir: &Path) -> Result<Runtime, ConfigError> {
    let app = RailsApp::build(load_config(dir)?)?;
    runtime_for(app)
}

/// Wraps an app in a runtime with the built-in and stub actions, reporting
/// unknown actions as configuration errors.
pub fn runtime_for(app: RailsApp) -> Result<Runtime, ConfigError> {
    Runtime::with_builtins(Arc::new(app)).map_err(|e| match e {
        RuntimeError::UnknownAction(name) => ConfigError::UnknownAction(name),
        other => ConfigError::Rule {
            path: Path::new(crate::config::CONFIG_FILE).to_path_buf(),
            message: other.to_string(),
        },
    })
}
