//! Provider-agnostic LLM access: task settings, retries, stop-sequence
//! enforcement, sampling and per-turn call recording.

mod http;
mod mock;
pub mod prompt;
mod tasks;

use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingError;

pub use http::{HttpLlm, LLM_API_KEY_ENV};
pub use mock::{FnLlm, MockCall, MockLlm, MockRule};
pub use prompt::{render_history, PromptInputs, PromptParts, PromptTemplate, DEFAULT_INSTRUCTIONS};
pub use tasks::{
    generate_bot_message, generate_next_step, generate_user_intent, parse_bot_message, parse_next_step,
    BotMessage, IntentRequest, UserIntent,
};

pub const DEFAULT_STOP: [&str; 2] = ["\nuser", "\n#"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    GenerateUserIntent,
    GenerateNextStep,
    GenerateBotMessage,
    RailJudgment,
    SampleResponse,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::GenerateUserIntent => "generate_user_intent",
            TaskKind::GenerateNextStep => "generate_next_step",
            TaskKind::GenerateBotMessage => "generate_bot_message",
            TaskKind::RailJudgment => "rail_judgment",
            TaskKind::SampleResponse => "sample_response",
        }
    }

    pub fn default_max_tokens(self) -> u32 {
        match self {
            TaskKind::GenerateUserIntent | TaskKind::GenerateNextStep => 32,
            _ => 256,
        }
    }

    fn uses_stop_sequences(self) -> bool {
        !matches!(self, TaskKind::RailJudgment)
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sampling temperature per task kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Temperatures {
    pub user_intent: f64,
    pub next_step: f64,
    pub bot_message: f64,
    pub judgment: f64,
    pub sample: f64,
}

impl Default for Temperatures {
    fn default() -> Self {
        Temperatures {
            user_intent: 0.0,
            next_step: 0.0,
            bot_message: 0.7,
            judgment: 0.0,
            sample: 1.0,
        }
    }
}

impl Temperatures {
    pub fn for_task(&self, kind: TaskKind) -> f64 {
        match kind {
            TaskKind::GenerateUserIntent => self.user_intent,
            TaskKind::GenerateNextStep => self.next_step,
            TaskKind::GenerateBotMessage => self.bot_message,
            TaskKind::RailJudgment => self.judgment,
            TaskKind::SampleResponse => self.sample,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LlmTask {
    pub kind: TaskKind,
    pub prompt: String,
    pub temperature: f64,
    pub stop: Vec<String>,
    pub max_tokens: u32,
}

impl LlmTask {
    pub fn new(kind: TaskKind, prompt: impl Into<String>, temperatures: &Temperatures) -> Self {
        LlmTask {
            kind,
            prompt: prompt.into(),
            temperature: temperatures.for_task(kind),
            stop: if kind.uses_stop_sequences() {
                DEFAULT_STOP.iter().map(|s| s.to_string()).collect()
            } else {
                Vec::new()
            },
            max_tokens: kind.default_max_tokens(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Completion {
    pub text: String,
    pub provider_name: String,
    pub latency_ms: u64,
    pub token_counts: Option<(u32, u32)>,
}

impl Completion {
    pub fn text(provider_name: &str, text: impl Into<String>) -> Self {
        Completion {
            text: text.into(),
            provider_name: provider_name.to_string(),
            latency_ms: 0,
            token_counts: None,
        }
    }
}

/// A failure reported by a remote model or embedding service.
#[derive(Clone, Debug, Error, PartialEq)]
#[error("{message}")]
pub struct ProviderError {
    pub message: String,
    pub retryable: bool,
    pub status: Option<u16>,
}

impl ProviderError {
    pub fn retryable(message: impl Into<String>) -> Self {
        ProviderError {
            message: message.into(),
            retryable: true,
            status: None,
        }
    }

    pub fn fatal(message: impl Into<String>) -> Self {
        ProviderError {
            message: message.into(),
            retryable: false,
            status: None,
        }
    }

    pub(crate) fn from_ureq(err: ureq::Error) -> Self {
        match err {
            ureq::Error::Status(code, resp) => {
                let body = resp.into_string().unwrap_or_default();
                let excerpt: String = body.chars().take(200).collect();
                ProviderError {
                    message: format!("HTTP {code}: {excerpt}"),
                    retryable: code == 429 || code >= 500,
                    status: Some(code),
                }
            }
            ureq::Error::Transport(t) => ProviderError::retryable(format!("transport error: {t}")),
        }
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("provider error: {0}")]
    Provider(#[from] ProviderError),
    #[error("no mock rule matches {kind} prompt ending with {tail:?}")]
    NoMatchingRule { kind: TaskKind, tail: String },
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("next step is not a `bot` line: {0:?}")]
    MalformedStep(String),
    #[error("sampling needs n >= 2, got {0}")]
    InvalidSampleCount(usize),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

impl LlmError {
    fn is_retryable(&self) -> bool {
        matches!(self, LlmError::Provider(p) if p.retryable)
    }
}

pub trait LlmProvider: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, task: &LlmTask) -> Result<Completion, LlmError>;

    /// Whether independent samples may be requested in parallel. Providers
    /// whose answers depend on call order (cycling mocks) keep this false.
    fn concurrent_samples(&self) -> bool {
        false
    }
}

/// One call as seen by a turn trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlmCall {
    pub kind: TaskKind,
    pub latency_ms: u64,
    pub ok: bool,
}

/// Shared log of the calls made through a recording gateway.
#[derive(Clone, Debug, Default)]
pub struct CallLog(Arc<Mutex<Vec<LlmCall>>>);

impl CallLog {
    pub fn snapshot(&self) -> Vec<LlmCall> {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn push(&self, call: LlmCall) {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).push(call);
    }
}

/// Cheap-to-clone handle over a provider plus the temperature policy.
#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn LlmProvider>,
    temperatures: Temperatures,
    log: Option<CallLog>,
}

impl fmt::Debug for Gateway {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Gateway")
            .field("provider", &self.provider.name())
            .field("temperatures", &self.temperatures)
            .finish()
    }
}

impl Gateway {
    pub fn new(provider: Arc<dyn LlmProvider>, temperatures: Temperatures) -> Self {
        Gateway {
            provider,
            temperatures,
            log: None,
        }
    }

    pub fn provider(&self) -> &Arc<dyn LlmProvider> {
        &self.provider
    }

    pub fn temperatures(&self) -> &Temperatures {
        &self.temperatures
    }

    /// A handle that appends every call to a fresh log.
    pub fn recording(&self) -> (Gateway, CallLog) {
        let log = CallLog::default();
        let gw = Gateway {
            log: Some(log.clone()),
            ..self.clone()
        };
        (gw, log)
    }

    pub fn task(&self, kind: TaskKind, prompt: impl Into<String>) -> LlmTask {
        LlmTask::new(kind, prompt, &self.temperatures)
    }

    /// Completes a task, retrying once on a retryable provider error, and
    /// cuts the text at the first stop sequence.
    pub fn complete(&self, task: &LlmTask) -> Result<Completion, LlmError> {
        if task.prompt.trim().is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        let started = Instant::now();
        let mut result = self.provider.complete(task);
        if result.as_ref().is_err_and(LlmError::is_retryable) {
            tracing::warn!(kind = %task.kind, "retrying after provider error");
            result = self.provider.complete(task);
        }
        let latency_ms = started.elapsed().as_millis() as u64;
        if let Some(log) = &self.log {
            log.push(LlmCall {
                kind: task.kind,
                latency_ms,
                ok: result.is_ok(),
            });
        }
        let mut completion = result?;
        truncate_at_stop(&mut completion.text, &task.stop);
        if completion.latency_ms == 0 {
            completion.latency_ms = latency_ms;
        }
        Ok(completion)
    }

    pub fn run(&self, kind: TaskKind, prompt: impl Into<String>) -> Result<Completion, LlmError> {
        self.complete(&self.task(kind, prompt))
    }

    /// `n` samples of the same prompt at the sampling temperature, in request order.
    pub fn sample_n(&self, prompt: &str, n: usize) -> Result<Vec<String>, LlmError> {
        if n < 2 {
            return Err(LlmError::InvalidSampleCount(n));
        }
        self.samples(prompt, n, self.temperatures.sample)
    }

    pub(crate) fn samples(&self, prompt: &str, n: usize, temperature: f64) -> Result<Vec<String>, LlmError> {
        let mut task = self.task(TaskKind::SampleResponse, prompt);
        task.temperature = temperature;
        if self.provider.concurrent_samples() && n > 1 {
            let task = &task;
            let results: Vec<Result<Completion, LlmError>> = std::thread::scope(|s| {
                let handles: Vec<_> = (0..n).map(|_| s.spawn(move || self.complete(task))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(ProviderError::fatal("sampling thread panicked").into())))
                    .collect()
            });
            results.into_iter().map(|r| r.map(|c| c.text)).collect()
        } else {
            (0..n).map(|_| self.complete(&task).map(|c| c.text)).collect()
        }
    }
}

fn truncate_at_stop(text: &mut String, stop: &[String]) {
    if let Some(cut) = stop.iter().filter(|s| !s.is_empty()).filter_map(|s| text.find(s.as_str())).min() {
        text.truncate(cut);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn temperature_and_token_policy() {
        let t = Temperatures::default();
        let intent = LlmTask::new(TaskKind::GenerateUserIntent, "p", &t);
        assert_eq!((intent.temperature, intent.max_tokens), (0.0, 32));
        assert_eq!(intent.stop, ["\nuser", "\n#"]);
        assert_eq!(LlmTask::new(TaskKind::GenerateNextStep, "p", &t).temperature, 0.0);
        assert_eq!(LlmTask::new(TaskKind::GenerateBotMessage, "p", &t).temperature, 0.7);
        assert_eq!(LlmTask::new(TaskKind::RailJudgment, "p", &t).temperature, 0.0);
        assert_eq!(LlmTask::new(TaskKind::SampleResponse, "p", &t).temperature, 1.0);
        assert_eq!(LlmTask::new(TaskKind::RailJudgment, "p", &t).max_tokens, 256);
    }

    #[test]
    fn stop_sequences_are_enforced() {
        let mock = MockLlm::new(vec![MockRule::any().respond("express greeting\nuser \"more\"\n# x")]);
        let gw = Gateway::new(Arc::new(mock), Temperatures::default());
        let c = gw.run(TaskKind::GenerateUserIntent, "prompt").unwrap();
        assert_eq!(c.text, "express greeting");
        assert!(!c.text.contains("\nuser"));
    }

    #[test]
    fn retries_once_on_retryable_errors() {
        let calls = Arc::new(AtomicUsize::new(0));
        let counter = calls.clone();
        let flaky = FnLlm::new(move |_task| {
            if counter.fetch_add(1, Ordering::SeqCst) == 0 {
                Err(ProviderError::retryable("busy").into())
            } else {
                Ok("ok".to_string())
            }
        });
        let gw = Gateway::new(Arc::new(flaky), Temperatures::default());
        assert_eq!(gw.run(TaskKind::RailJudgment, "p").unwrap().text, "ok");
        assert_eq!(calls.load(Ordering::SeqCst), 2);

        let always = FnLlm::new(|_| Err(ProviderError::retryable("down").into()));
        let gw = Gateway::new(Arc::new(always), Temperatures::default());
        assert!(matches!(gw.run(TaskKind::RailJudgment, "p"), Err(LlmError::Provider(_))));

        let calls = Arc::new(AtomicUsize::new(0));
        let counter = calls.clone();
        let fatal = FnLlm::new(move |_| {
            counter.fetch_add(1, Ordering::SeqCst);
            Err(ProviderError::fatal("bad request").into())
        });
        let gw = Gateway::new(Arc::new(fatal), Temperatures::default());
        assert!(gw.run(TaskKind::RailJudgment, "p").is_err());
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn empty_prompt_rejected() {
        let gw = Gateway::new(Arc::new(MockLlm::new(vec![])), Temperatures::default());
        assert!(matches!(gw.run(TaskKind::RailJudgment, "  "), Err(LlmError::EmptyPrompt)));
    }

    #[test]
    fn sample_n_keeps_rule_order() {
        let mock = Arc::new(MockLlm::new(vec![MockRule::for_task(TaskKind::SampleResponse).cycle(["a", "b", "c"])]));
        let gw = Gateway::new(mock.clone(), Temperatures::default());
        assert_eq!(gw.sample_n("q", 4).unwrap(), ["a", "b", "c", "a"]);
        assert!(mock.calls().iter().all(|c| c.temperature == 1.0));
        assert!(matches!(gw.sample_n("q", 1), Err(LlmError::InvalidSampleCount(1))));
    }

    #[test]
    fn concurrent_samples_are_indexed_by_request() {
        struct Parallel;
        impl LlmProvider for Parallel {
            fn name(&self) -> &str {
                "parallel"
            }
            fn complete(&self, task: &LlmTask) -> Result<Completion, LlmError> {
                Ok(Completion::text("parallel", task.prompt.to_uppercase()))
            }
            fn concurrent_samples(&self) -> bool {
                true
            }
        }
        let gw = Gateway::new(Arc::new(Parallel), Temperatures::default());
        assert_eq!(gw.sample_n("q", 3).unwrap(), ["Q", "Q", "Q"]);

        let failing = FnLlm::new(|_| Err(ProviderError::fatal("x").into()));
        let gw = Gateway::new(Arc::new(failing), Temperatures::default());
        assert!(gw.sample_n("q", 3).is_err());
    }

    #[test]
    fn recording_gateway_logs_calls() {
        let gw = Gateway::new(Arc::new(MockLlm::new(vec![MockRule::any().respond("x")])), Temperatures::default());
        let (rec, log) = gw.recording();
        rec.run(TaskKind::GenerateUserIntent, "p").unwrap();
        gw.run(TaskKind::GenerateUserIntent, "p").unwrap();
        let calls = log.snapshot();
        assert_eq!(calls.len(), 1);
        assert_eq!(calls[0].kind, TaskKind::GenerateUserIntent);
    }
}
