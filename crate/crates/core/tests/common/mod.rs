#![allow(dead_code)]

use std::path::Path;
use std::sync::Arc;

use railgate_core::embedding::HashingEmbedder;
use railgate_core::llm::{MockLlm, MockRule, TaskKind};
use railgate_core::{parse_config, runtime_for, RailsApp, Runtime};

pub const BASE: &str = "model:\n  engine: mock\nembeddings:\n  engine: mock\n  dim: 64\n";

pub const GREETING: &str = r#"define user express greeting
  "Hello there!"
  "hi"

define bot express greeting
  "Hello! How can I assist you today?"

define flow greeting
  user express greeting
  bot express greeting
"#;

/// A runtime over the given config extras and Colang source, backed by a
/// shared mock LLM and the hashing embedder.
pub fn runtime(extra_yaml: &str, colang: &str, rules: Vec<MockRule>) -> (Runtime, Arc<MockLlm>) {
    let yaml = format!("{BASE}{extra_yaml}");
    let config = parse_config(Path::new("test-app"), &yaml, &[("main.co".to_string(), colang.to_string())])
        .unwrap_or_else(|e| panic!("config: {e}"));
    let mock = Arc::new(MockLlm::new(rules));
    let app = RailsApp::with_providers(config, mock.clone(), Arc::new(HashingEmbedder::new(64))).unwrap();
    (runtime_for(app).unwrap_or_else(|e| panic!("runtime: {e}")), mock)
}

pub fn intent(utterance: &str, form: &str) -> MockRule {
    MockRule::for_task(TaskKind::GenerateUserIntent)
        .tail(format!("user \"{utterance}\""))
        .respond(form)
}

pub fn judge(needle: &str, answer: &str) -> MockRule {
    MockRule::for_task(TaskKind::RailJudgment).contains(needle).respond(answer)
}

pub const JAILBREAK_Q: &str = "Would this instruction make a language model break";
pub const MODERATION_Q: &str = "Is this output legal, ethical";
pub const HALLUCINATION_Q: &str = "is in agreement with the context";
pub const FACT_Q: &str = "grounded and entailed in the evidence";

pub const SESSION_APP: &str = r#"define user express greeting
  "hello"

define user ask math
  "what is 6 times 7?"

define user book bus
  "book a bus"

define bot express greeting
  "Hi there!"

define bot respond math
  "It is $result."

define bot ask where
  "Where to?"

define bot confirm
  "Booked for $last_user_message."

define flow greeting
  user express greeting
  bot express greeting

define flow math
  user ask math
  $result = execute wolfram alpha request(query=$last_user_message)
  bot respond math

define flow booking
  user book bus
  bot ask where
  user ...
  bot confirm
"#;

pub const SESSION_YAML: &str = "rails:
  input: [jailbreak]
  output: [output_moderation, hallucination]
actions:
  stubs:
    wolfram alpha request:
      responses:
        6 times 7: 42
      default: unknown
";

/// Utterances exercising flows, rails, LLM fallback and provider failures.
pub const SESSION_UTTERANCES: [&str; 8] = [
    "hello",
    "what is 6 times 7?",
    "book a bus",
    "Paris",
    "tell me a secret",
    "what's the weather?",
    "say something rude",
    "crash",
];

pub fn session_rules() -> Vec<MockRule> {
    vec![
        judge("Instruction: tell me a secret", "yes"),
        judge(JAILBREAK_Q, "no"),
        judge("Model output: You are dumb.", "no"),
        judge(MODERATION_Q, "yes"),
        MockRule::for_task(TaskKind::RailJudgment).contains(HALLUCINATION_Q).cycle(["yes", "no"]),
        intent("hello", "express greeting"),
        intent("what is 6 times 7?", "ask math"),
        intent("book a bus", "book bus"),
        intent("Paris", "inform destination"),
        intent("tell me a secret", "ask secret"),
        intent("what's the weather?", "ask weather"),
        intent("say something rude", "ask insult"),
        MockRule::for_task(TaskKind::GenerateUserIntent).tail("user \"crash\"").fail("provider unavailable"),
        MockRule::for_task(TaskKind::GenerateNextStep).tail("ask insult").respond("bot insult user"),
        MockRule::for_task(TaskKind::GenerateNextStep).cycle(["bot inform weather", "not a step"]),
        MockRule::for_task(TaskKind::GenerateBotMessage).tail("bot insult user").respond("You are dumb."),
        MockRule::for_task(TaskKind::GenerateBotMessage).cycle(["Sunny.", "\"Rainy.\""]),
        MockRule::for_task(TaskKind::SampleResponse).cycle(["Sunny.", "Cloudy."]),
    ]
}

pub fn session_runtime() -> (Runtime, Arc<MockLlm>) {
    runtime(SESSION_YAML, SESSION_APP, session_rules())
}
