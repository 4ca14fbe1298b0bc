use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{EmbeddingError, EmbeddingProvider, EmbeddingVector};
use crate::llm::ProviderError;

pub const EMBEDDINGS_API_KEY_ENV: &str = "RAILGATE_EMBEDDINGS_API_KEY";

/// Embeddings over HTTP: `{"input": [..], "model": ..}` in, `data[].embedding` out.
pub struct HttpEmbedder {
    endpoint: String,
    model: String,
    dim: usize,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, dim: usize, timeout: Duration) -> Self {
        HttpEmbedder {
            endpoint: endpoint.into(),
            model: model.into(),
            dim,
            api_key: std::env::var(EMBEDDINGS_API_KEY_ENV).ok(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn name(&self) -> &str {
        &self.model
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = req
            .send_json(json!({ "input": texts, "model": self.model }))
            .map_err(ProviderError::from_ureq)?;
        let body: EmbeddingResponse = resp
            .into_json()
            .map_err(|e| ProviderError::fatal(format!("malformed embeddings response: {e}")))?;
        body.data
            .into_iter()
            .map(|d| EmbeddingVector::new(d.embedding))
            .collect()
    }
}
