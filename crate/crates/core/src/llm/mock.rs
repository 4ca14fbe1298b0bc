use std::fs;
use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;

use super::{Completion, LlmError, LlmProvider, LlmTask, ProviderError, TaskKind};

/// One scripted answer. A rule applies when every matcher it sets holds:
/// `task` equals the task kind, `contains` occurs anywhere in the prompt,
/// `tail` occurs in the last nonblank prompt line.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(default)]
    pub task: Option<TaskKind>,
    #[serde(default)]
    pub contains: Option<String>,
    #[serde(default)]
    pub tail: Option<String>,
    #[serde(default)]
    pub response: Option<String>,
    /// Answers returned in turn, cycling.
    #[serde(default)]
    pub responses: Vec<String>,
    /// The rule stops matching after its first use.
    #[serde(default)]
    pub once: bool,
    /// Fail with a non-retryable provider error carrying this message.
    #[serde(default)]
    pub error: Option<String>,
}

impl MockRule {
    pub fn any() -> Self {
        MockRule::default()
    }

    pub fn for_task(kind: TaskKind) -> Self {
        MockRule {
            task: Some(kind),
            ..MockRule::default()
        }
    }

    pub fn contains(mut self, needle: impl Into<String>) -> Self {
        self.contains = Some(needle.into());
        self
    }

    pub fn tail(mut self, needle: impl Into<String>) -> Self {
        self.tail = Some(needle.into());
        self
    }

    pub fn respond(mut self, text: impl Into<String>) -> Self {
        self.response = Some(text.into());
        self
    }

    pub fn cycle<I, S>(mut self, texts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.responses = texts.into_iter().map(Into::into).collect();
        self
    }

    pub fn once(mut self) -> Self {
        self.once = true;
        self
    }

    pub fn fail(mut self, message: impl Into<String>) -> Self {
        self.error = Some(message.into());
        self
    }

    fn matches(&self, task: &LlmTask) -> bool {
        self.task.is_none_or(|k| k == task.kind)
            && self.contains.as_deref().is_none_or(|c| task.prompt.contains(c))
            && self.tail.as_deref().is_none_or(|t| last_line(&task.prompt).contains(t))
    }

    pub(crate) fn validate(&self, index: usize) -> Result<(), String> {
        let answers = usize::from(self.response.is_some()) + usize::from(!self.responses.is_empty())
            + usize::from(self.error.is_some());
        if answers != 1 {
            return Err(format!(
                "mock rule {index}: set exactly one of `response`, `responses` or `error`"
            ));
        }
        Ok(())
    }
}

fn last_line(prompt: &str) -> &str {
    prompt.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("")
}

/// A call received by [`MockLlm`].
#[derive(Clone, Debug, PartialEq)]
pub struct MockCall {
    pub kind: TaskKind,
    pub prompt: String,
    pub temperature: f64,
    pub stop: Vec<String>,
    pub max_tokens: u32,
}

#[derive(Debug, Default)]
struct MockState {
    cursors: Vec<usize>,
    spent: Vec<bool>,
    calls: Vec<MockCall>,
}

/// Scripted provider: the first matching rule in list order answers, and a
/// prompt no rule matches is an error.
#[derive(Debug)]
pub struct MockLlm {
    rules: Vec<MockRule>,
    state: Mutex<MockState>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    rules: Vec<MockRule>,
}

impl MockLlm {
    pub fn new(rules: Vec<MockRule>) -> Self {
        let n = rules.len();
        MockLlm {
            rules,
            state: Mutex::new(MockState {
                cursors: vec![0; n],
                spent: vec![false; n],
                calls: Vec::new(),
            }),
        }
    }

    /// Parses a rule file: YAML (or JSON) with a top-level `rules` list.
    pub fn from_yaml(text: &str) -> Result<Self, String> {
        let file: RuleFile = serde_yaml::from_str(text).map_err(|e| e.to_string())?;
        for (i, r) in file.rules.iter().enumerate() {
            r.validate(i)?;
        }
        Ok(MockLlm::new(file.rules))
    }

    pub fn into_rules(self) -> Vec<MockRule> {
        self.rules
    }

    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        MockLlm::from_yaml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn calls(&self) -> Vec<MockCall> {
        self.lock().calls.clone()
    }

    pub fn call_count(&self) -> usize {
        self.lock().calls.len()
    }

    pub fn calls_of(&self, kind: TaskKind) -> Vec<MockCall> {
        self.lock().calls.iter().filter(|c| c.kind == kind).cloned().collect()
    }

    pub fn clear_calls(&self) {
        self.lock().calls.clear();
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, MockState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl LlmProvider for MockLlm {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, task: &LlmTask) -> Result<Completion, LlmError> {
        let mut state = self.lock();
        state.calls.push(MockCall {
            kind: task.kind,
            prompt: task.prompt.clone(),
            temperature: task.temperature,
            stop: task.stop.clone(),
            max_tokens: task.max_tokens,
        });
        let Some(i) = (0..self.rules.len()).find(|&i| !state.spent[i] && self.rules[i].matches(task)) else {
            return Err(LlmError::NoMatchingRule {
                kind: task.kind,
                tail: last_line(&task.prompt).to_string(),
            });
        };
        let rule = &self.rules[i];
        if rule.once {
            state.spent[i] = true;
        }
        if let Some(message) = &rule.error {
            return Err(ProviderError::fatal(message.clone()).into());
        }
        let text = match &rule.response {
            Some(r) => r.clone(),
            None => {
                let n = rule.responses.len();
                let text = rule.responses[state.cursors[i] % n].clone();
                state.cursors[i] += 1;
                text
            }
        };
        Ok(Completion::text("mock", text))
    }
}

/// Provider backed by a closure, for tests and evaluation oracles.
pub struct FnLlm<F> {
    f: F,
}

impl<F> FnLlm<F>
where
    F: Fn(&LlmTask) -> Result<String, LlmError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        FnLlm { f }
    }
}

impl<F> LlmProvider for FnLlm<F>
where
    F: Fn(&LlmTask) -> Result<String, LlmError> + Send + Sync,
{
    fn name(&self) -> &str {
        "fn"
    }

    fn complete(&self, task: &LlmTask) -> Result<Completion, LlmError> {
        (self.f)(task).map(|text| Completion::text("fn", text))
    }
}
