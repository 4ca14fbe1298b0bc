use crate::embedding::{EmbeddingProvider, FormMatcher, Index, IndexedItem};

use super::prompt::{bot_message_prompt, intent_prompt, next_step_prompt, PromptInputs};
use super::{Gateway, LlmError, TaskKind};

/// Everything intent generation needs besides the gateway.
pub struct IntentRequest<'a> {
    pub inputs: PromptInputs<'a>,
    pub utterance: &'a str,
    pub examples: &'a Index,
    pub k: usize,
    pub forms: &'a FormMatcher,
    /// `None` means exact matching only.
    pub threshold: Option<f64>,
    pub embedder: &'a dyn EmbeddingProvider,
    /// Example text withheld from retrieval (evaluation hold-out).
    pub held_out: Option<&'a str>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserIntent {
    /// The matched defined form, or the raw generation when unmatched.
    pub form: String,
    pub matched: bool,
    pub raw: String,
    /// Texts of the few-shot examples placed in the prompt, in rank order.
    pub examples: Vec<String>,
}

pub fn generate_user_intent(gateway: &Gateway, req: &IntentRequest) -> Result<UserIntent, LlmError> {
    let hits = req.examples.knn_filtered(req.utterance, req.k, req.embedder, |item| {
        req.held_out.is_none_or(|h| item.text != h)
    })?;
    let shots: Vec<&IndexedItem> = hits.iter().map(|(i, _)| *i).collect();
    let prompt = intent_prompt(&req.inputs, &shots).render();
    let completion = gateway.run(TaskKind::GenerateUserIntent, prompt)?;
    let raw = first_line(&completion.text).to_lowercase();
    let examples = shots.iter().map(|i| i.text.clone()).collect();
    if raw.is_empty() {
        return Ok(UserIntent {
            form: raw.clone(),
            matched: false,
            raw,
            examples,
        });
    }
    let matched = match req.threshold {
        Some(t) => req.forms.best_match(&raw, t, req.embedder)?,
        None => req.forms.contains(&raw).then(|| raw.clone()),
    };
    Ok(UserIntent {
        matched: matched.is_some(),
        form: matched.unwrap_or_else(|| raw.clone()),
        raw,
        examples,
    })
}

fn first_line(text: &str) -> &str {
    text.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("")
}

/// Extracts the bot form from a next-step completion.
pub fn parse_next_step(text: &str) -> Result<String, LlmError> {
    let line = first_line(text);
    match line.strip_prefix("bot ").map(|f| f.trim().to_lowercase()) {
        Some(form) if !form.is_empty() && form != "..." => Ok(form),
        _ => Err(LlmError::MalformedStep(line.to_string())),
    }
}

pub fn generate_next_step(
    gateway: &Gateway,
    inputs: &PromptInputs,
    intent: &str,
    flows: &Index,
    k: usize,
    embedder: &dyn EmbeddingProvider,
) -> Result<String, LlmError> {
    let hits = if intent.trim().is_empty() {
        Vec::new()
    } else {
        flows.knn(intent, k, embedder)?
    };
    let shots: Vec<&IndexedItem> = hits.iter().map(|(i, _)| *i).collect();
    let prompt = next_step_prompt(inputs, &shots).render();
    let completion = gateway.run(TaskKind::GenerateNextStep, prompt)?;
    parse_next_step(&completion.text)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BotMessage {
    pub text: String,
    /// The prompt that produced the text, reused for self-consistency sampling.
    pub prompt: String,
}

/// Takes the first quoted string when the completion starts with a quote,
/// otherwise the whole trimmed text.
pub fn parse_bot_message(text: &str) -> String {
    let trimmed = text.trim();
    let Some(rest) = trimmed.strip_prefix('"') else {
        return trimmed.to_string();
    };
    let mut out = String::new();
    let mut chars = rest.chars();
    while let Some(c) = chars.next() {
        match c {
            '"' => return out,
            '\\' => match chars.next() {
                Some(n) => out.push(n),
                None => break,
            },
            c => out.push(c),
        }
    }
    trimmed.to_string()
}

pub fn generate_bot_message(
    gateway: &Gateway,
    inputs: &PromptInputs,
    form: &str,
    examples: &Index,
    k: usize,
    embedder: &dyn EmbeddingProvider,
    relevant_chunks: Option<&str>,
) -> Result<BotMessage, LlmError> {
    let hits = examples.knn(form, k, embedder)?;
    let shots: Vec<&IndexedItem> = hits.iter().map(|(i, _)| *i).collect();
    let prompt = bot_message_prompt(inputs, &shots, form, relevant_chunks).render();
    let completion = gateway.run(TaskKind::GenerateBotMessage, prompt.clone())?;
    Ok(BotMessage {
        text: parse_bot_message(&completion.text),
        prompt,
    })
}
