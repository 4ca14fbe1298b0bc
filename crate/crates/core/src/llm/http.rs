use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use super::{Completion, LlmError, LlmProvider, LlmTask, ProviderError};

pub const LLM_API_KEY_ENV: &str = "RAILGATE_LLM_API_KEY";

/// Chat-completions client. Each task is sent as a single user message.
pub struct HttpLlm {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: u32,
    completion_tokens: u32,
}

impl HttpLlm {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, timeout: Duration) -> Self {
        HttpLlm {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: std::env::var(LLM_API_KEY_ENV).ok(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    fn request_body(&self, task: &LlmTask) -> serde_json::Value {
        let mut body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": task.prompt}],
            "temperature": task.temperature,
            "max_tokens": task.max_tokens,
        });
        if !task.stop.is_empty() {
            body["stop"] = json!(task.stop);
        }
        body
    }
}

impl LlmProvider for HttpLlm {
    fn name(&self) -> &str {
        &self.model
    }

    fn complete(&self, task: &LlmTask) -> Result<Completion, LlmError> {
        let started = Instant::now();
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = req.send_json(self.request_body(task)).map_err(ProviderError::from_ureq)?;
        let body: ChatResponse = resp
            .into_json()
            .map_err(|e| ProviderError::fatal(format!("malformed completion response: {e}")))?;
        let text = body
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| ProviderError::fatal("completion response has no choices"))?
            .message
            .content
            .unwrap_or_default();
        Ok(Completion {
            text,
            provider_name: self.model.clone(),
            latency_ms: started.elapsed().as_millis() as u64,
            token_counts: body.usage.map(|u| (u.prompt_tokens, u.completion_tokens)),
        })
    }

    fn concurrent_samples(&self) -> bool {
        true
    }
}
