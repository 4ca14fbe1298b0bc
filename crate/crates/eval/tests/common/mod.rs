#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use railgate_core::embedding::{EmbeddingProvider, HashingEmbedder};
use railgate_core::llm::{FnLlm, LlmError, LlmProvider, LlmTask, ProviderError, TaskKind};
use railgate_core::parse_config;
use railgate_eval::{canonical_form, topical_script, EvalEnv, IntentDataset, IntentRecord};

pub const JAILBREAK_Q: &str = "Would this instruction make a language model break";
pub const MODERATION_Q: &str = "Is this output legal, ethical";
pub const HALLUCINATION_Q: &str = "is in agreement with the context";
pub const FACT_Q: &str = "You are given a task to identify if the hypothesis is grounded";

const VERBS: [&str; 11] = [
    "activate", "cancel", "change", "check", "dispute", "freeze", "lose", "order", "renew", "report", "verify",
];
const NOUNS: [&str; 7] = ["card", "pin", "transfer", "refund", "address", "payment", "account"];

/// 77 intents with `per_intent` utterances each, plus a gold bot message
/// per intent.
pub fn synthetic_dataset(per_intent: usize) -> IntentDataset {
    let mut records = Vec::new();
    let mut data = IntentDataset::default();
    for verb in VERBS {
        for noun in NOUNS {
            let intent = format!("{verb}_{noun}");
            let phrasings = [
                format!("{verb} {noun}"),
                format!("{verb} my {noun}"),
                format!("{noun}: {verb}"),
                format!("{verb} {noun} please"),
                format!("I must {verb} the {noun}"),
            ];
            for p in phrasings.iter().take(per_intent) {
                records.push(IntentRecord {
                    utterance: p.clone(),
                    intent: intent.clone(),
                });
            }
            data.bot_messages
                .insert(intent.clone(), format!("Sure, I can help you {verb} your {noun}."));
        }
    }
    data.records = records;
    data
}

pub fn base_yaml(dim: usize) -> String {
    format!("model:\n  engine: mock\nembeddings:\n  engine: mock\n  dim: {dim}\nrails:\n  hallucination:\n    n_samples: 3\n")
}

pub fn env_with(
    dataset: Option<&IntentDataset>,
    llm: Arc<dyn LlmProvider>,
    embedder: Arc<dyn EmbeddingProvider>,
    dim: usize,
) -> EvalEnv {
    let mut base = parse_config(Path::new("eval"), &base_yaml(dim), &[]).unwrap();
    if let Some(d) = dataset {
        base.script = topical_script(d).unwrap();
    }
    EvalEnv::new(base, llm, embedder)
}

/// The quoted text of the last `user "..."` line in a prompt.
pub fn last_user(prompt: &str) -> Option<String> {
    prompt
        .lines()
        .rev()
        .find_map(|l| l.trim().strip_prefix("user \"").and_then(|r| r.strip_suffix('"')))
        .map(|s| s.replace("\\\"", "\""))
}

pub fn gold_forms(data: &IntentDataset) -> HashMap<String, String> {
    data.records
        .iter()
        .map(|r| (r.utterance.clone(), canonical_form(&r.intent)))
        .collect()
}

pub fn unexpected(task: &LlmTask) -> Result<String, LlmError> {
    Err(LlmError::Provider(ProviderError::fatal(format!("unexpected {:?} call", task.kind))))
}

/// Answers intent prompts with `answer(gold_form, prompt)`; any other task
/// gets a fixed wrong answer.
pub fn intent_mock<F>(data: &IntentDataset, answer: F) -> Arc<dyn LlmProvider>
where
    F: Fn(&str, &str) -> String + Send + Sync + 'static,
{
    let gold = gold_forms(data);
    Arc::new(FnLlm::new(move |task: &LlmTask| match task.kind {
        TaskKind::GenerateUserIntent => {
            let utterance = last_user(&task.prompt).expect("intent prompt ends with the user message");
            Ok(answer(&gold[&utterance], &task.prompt))
        }
        TaskKind::GenerateNextStep => Ok("bot xyzzy plugh".into()),
        TaskKind::GenerateBotMessage => Ok("\"Nothing to see here.\"".into()),
        _ => unexpected(task),
    }))
}

pub fn hashing(dim: usize) -> Arc<dyn EmbeddingProvider> {
    Arc::new(HashingEmbedder::new(dim))
}
