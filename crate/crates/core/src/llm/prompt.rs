//! Four-part prompt assembly: general instructions, sample conversation,
//! retrieved few-shot examples and the current conversation, all rendered in
//! Colang syntax.

use std::collections::BTreeSet;
use std::path::Path;

use railgate_colang::quote;
use serde::{Deserialize, Serialize};

use crate::embedding::IndexedItem;
use crate::runtime::{Event, SequencedEvent};

pub const DEFAULT_INSTRUCTIONS: &str = "The following is a dialogue between a user and an assistant bot. \
The bot gives accurate, concise answers. When it lacks the information to answer, it says so.";

/// Section headers of a prompt family. Loaded from a named template file so
/// prompts can differ per model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptTemplate {
    pub name: String,
    pub sample_conversation_header: String,
    pub user_examples_header: String,
    pub flow_examples_header: String,
    pub bot_examples_header: String,
    pub relevant_context_header: String,
    pub current_conversation_header: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            name: "default".into(),
            sample_conversation_header: "# This is how a conversation between a user and the bot can go:".into(),
            user_examples_header: "# This is how the user talks:".into(),
            flow_examples_header: "# This is how the bot thinks:".into(),
            bot_examples_header: "# This is how the bot talks:".into(),
            relevant_context_header: "# This is some additional context:".into(),
            current_conversation_header: "# This is the current conversation between the user and the bot:".into(),
        }
    }
}

impl PromptTemplate {
    pub fn from_yaml(text: &str) -> Result<Self, serde_yaml::Error> {
        serde_yaml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        PromptTemplate::from_yaml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PromptParts {
    pub general_instructions: String,
    pub sample_conversation: String,
    pub fewshot_block: String,
    pub current_conversation: String,
}

impl PromptParts {
    /// Joins the nonempty parts, in order, with blank lines.
    pub fn render(&self) -> String {
        [
            &self.general_instructions,
            &self.sample_conversation,
            &self.fewshot_block,
            &self.current_conversation,
        ]
        .into_iter()
        .filter(|p| !p.is_empty())
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join("\n\n")
    }
}

/// What every generation prompt is built from.
#[derive(Clone, Copy, Debug)]
pub struct PromptInputs<'a> {
    pub template: &'a PromptTemplate,
    pub instructions: &'a str,
    pub sample_conversation: &'a str,
    pub history: &'a [SequencedEvent],
    /// Actions run by rail flows; they are not shown to the model.
    pub hidden_actions: &'a BTreeSet<String>,
}

impl PromptInputs<'_> {
    fn base(&self) -> PromptParts {
        PromptParts {
            general_instructions: if self.instructions.trim().is_empty() {
                String::new()
            } else {
                format!("\"\"\"\n{}\n\"\"\"", self.instructions.trim())
            },
            sample_conversation: section(&self.template.sample_conversation_header, self.sample_conversation.trim_end()),
            ..PromptParts::default()
        }
    }

    fn conversation(&self, extra: &str) -> String {
        let mut body = render_history(self.history, self.hidden_actions);
        body.push_str(extra);
        format!("{}\n\n{body}", self.template.current_conversation_header)
    }
}

fn section(header: &str, body: &str) -> String {
    if body.is_empty() {
        String::new()
    } else {
        format!("{header}\n\n{body}")
    }
}

/// Prompt whose completion is the canonical form of the last user message.
pub fn intent_prompt(inputs: &PromptInputs, examples: &[&IndexedItem]) -> PromptParts {
    let shots: Vec<String> = examples
        .iter()
        .map(|i| format!("user {}\n  {}", quote(&i.text), i.payload))
        .collect();
    PromptParts {
        fewshot_block: section(&inputs.template.user_examples_header, &shots.join("\n\n")),
        current_conversation: inputs.conversation(""),
        ..inputs.base()
    }
}

/// Prompt whose completion is the next `bot <form>` line.
pub fn next_step_prompt(inputs: &PromptInputs, flows: &[&IndexedItem]) -> PromptParts {
    let shots: Vec<&str> = flows.iter().map(|i| i.text.trim_end()).collect();
    PromptParts {
        fewshot_block: section(&inputs.template.flow_examples_header, &shots.join("\n\n")),
        current_conversation: inputs.conversation(""),
        ..inputs.base()
    }
}

/// Prompt whose completion is the utterance for `form`.
pub fn bot_message_prompt(
    inputs: &PromptInputs,
    examples: &[&IndexedItem],
    form: &str,
    relevant_chunks: Option<&str>,
) -> PromptParts {
    let shots: Vec<String> = examples
        .iter()
        .map(|i| format!("bot {}\n  {}", i.payload, quote(&i.text)))
        .collect();
    let mut current = inputs.conversation(&format!("bot {form}\n"));
    if let Some(chunks) = relevant_chunks.map(str::trim).filter(|c| !c.is_empty()) {
        current = format!("{}\n\n{chunks}\n\n{current}", inputs.template.relevant_context_header);
    }
    PromptParts {
        fewshot_block: section(&inputs.template.bot_examples_header, &shots.join("\n\n")),
        current_conversation: current,
        ..inputs.base()
    }
}

/// Renders a session history in Colang syntax, one line per element, with a
/// trailing newline. Bot messages appear only once uttered, labelled with
/// the intent that produced them, so candidates removed by output rails
/// never reach the prompt.
pub fn render_history(events: &[SequencedEvent], hidden_actions: &BTreeSet<String>) -> String {
    let mut out = String::new();
    let mut current_form: Option<&str> = None;
    let mut resolved: Vec<(&str, &str)> = Vec::new();
    for ev in events {
        match &ev.event {
            Event::UtteranceUserActionFinished { text } => {
                out.push_str(&format!("user {}\n", quote(text)));
            }
            Event::UserIntent { form, .. } if !form.is_empty() => {
                out.push_str(&format!("  {form}\n"));
            }
            Event::BotIntent { form } => current_form = Some(form),
            Event::ContextUpdate { key, value } if key == "last_bot_message" => {
                if let (Some(form), Some(text)) = (current_form, value.as_text()) {
                    resolved.push((form, text));
                }
            }
            Event::StartUtteranceBotAction { text } => {
                let form = resolved
                    .iter()
                    .rposition(|(_, t)| t == text)
                    .map(|i| resolved.remove(i).0)
                    .unwrap_or("respond");
                out.push_str(&format!("bot {form}\n  {}\n", quote(text)));
            }
            Event::StartAction { name, .. } if !hidden_actions.contains(name) => {
                out.push_str(&format!("execute {name}\n"));
            }
            Event::ActionFinished { name, return_value, .. } if !hidden_actions.contains(name) => {
                out.push_str(&format!("  # The result was {return_value}\n"));
            }
            _ => {}
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{EmbeddingVector, ItemKind};
    use crate::value::Value;

    fn seq(events: Vec<Event>) -> Vec<SequencedEvent> {
        events
            .into_iter()
            .enumerate()
            .map(|(i, event)| SequencedEvent { seq: i as u64, event })
            .collect()
    }

    fn item(id: usize, text: &str, payload: &str) -> IndexedItem {
        IndexedItem {
            id,
            kind: ItemKind::UserExample,
            text: text.into(),
            payload: payload.into(),
            vector: EmbeddingVector::new(vec![1.0]).unwrap(),
        }
    }

    #[test]
    fn history_in_colang_syntax() {
        let history = seq(vec![
            Event::user("Hello there!"),
            Event::context("last_user_message", "Hello there!"),
            Event::UserIntent {
                form: "express greeting".into(),
                matched: true,
            },
            Event::BotIntent {
                form: "express greeting".into(),
            },
            Event::context("last_bot_message", "Hello! How can I assist you today?"),
            Event::StartUtteranceBotAction {
                text: "Hello! How can I assist you today?".into(),
            },
            Event::Listen,
            Event::user("what is 2+2?"),
            Event::StartAction {
                name: "check_jailbreak".into(),
                args: Default::default(),
            },
            Event::ActionFinished {
                name: "check_jailbreak".into(),
                return_value: Value::Bool(true),
                status: crate::runtime::ActionStatus::Success,
            },
            Event::UserIntent {
                form: "ask math question".into(),
                matched: true,
            },
            Event::StartAction {
                name: "wolfram_alpha_request".into(),
                args: Default::default(),
            },
            Event::ActionFinished {
                name: "wolfram_alpha_request".into(),
                return_value: Value::from("4"),
                status: crate::runtime::ActionStatus::Success,
            },
        ]);
        let hidden: BTreeSet<String> = ["check_jailbreak".to_string()].into();
        assert_eq!(
            render_history(&history, &hidden),
            "user \"Hello there!\"\n  express greeting\nbot express greeting\n  \"Hello! How can I assist you today?\"\n\
             user \"what is 2+2?\"\n  ask math question\nexecute wolfram_alpha_request\n  # The result was 4\n"
        );
    }

    #[test]
    fn removed_candidates_are_not_rendered() {
        let history = seq(vec![
            Event::user("q"),
            Event::BotIntent { form: "answer".into() },
            Event::context("last_bot_message", "bad answer"),
            Event::BotIntent {
                form: "inform cannot answer".into(),
            },
            Event::context("last_bot_message", "I can't help with that."),
            Event::StartUtteranceBotAction {
                text: "I can't help with that.".into(),
            },
        ]);
        let out = render_history(&history, &BTreeSet::new());
        assert_eq!(out, "user \"q\"\nbot inform cannot answer\n  \"I can't help with that.\"\n");
    }

    #[test]
    fn intent_prompt_layout() {
        let template = PromptTemplate::default();
        let history = seq(vec![Event::user("Hello there!")]);
        let hidden = BTreeSet::new();
        let inputs = PromptInputs {
            template: &template,
            instructions: "Be nice.",
            sample_conversation: "user \"hi\"\n  express greeting\n",
            history: &history,
            hidden_actions: &hidden,
        };
        let a = item(0, "hey", "express greeting");
        let b = item(1, "bye", "say goodbye");
        let prompt = intent_prompt(&inputs, &[&a, &b]).render();
        assert_eq!(
            prompt,
            "\"\"\"\nBe nice.\n\"\"\"\n\n\
             # This is how a conversation between a user and the bot can go:\n\nuser \"hi\"\n  express greeting\n\n\
             # This is how the user talks:\n\nuser \"hey\"\n  express greeting\n\nuser \"bye\"\n  say goodbye\n\n\
             # This is the current conversation between the user and the bot:\n\nuser \"Hello there!\"\n"
        );
    }

    #[test]
    fn empty_parts_are_skipped() {
        let template = PromptTemplate::default();
        let hidden = BTreeSet::new();
        let inputs = PromptInputs {
            template: &template,
            instructions: "Be nice.",
            sample_conversation: "",
            history: &[],
            hidden_actions: &hidden,
        };
        let parts = intent_prompt(&inputs, &[]);
        assert!(parts.fewshot_block.is_empty());
        assert!(parts.sample_conversation.is_empty());
        assert_eq!(
            parts.render(),
            "\"\"\"\nBe nice.\n\"\"\"\n\n# This is the current conversation between the user and the bot:\n\n"
        );
    }

    #[test]
    fn bot_message_prompt_ends_with_pending_intent() {
        let template = PromptTemplate::default();
        let hidden = BTreeSet::new();
        let history = seq(vec![
            Event::user("What is the capital?"),
            Event::UserIntent {
                form: "ask question".into(),
                matched: false,
            },
        ]);
        let inputs = PromptInputs {
            template: &template,
            instructions: "",
            sample_conversation: "",
            history: &history,
            hidden_actions: &hidden,
        };
        let ex = item(0, "Paris.", "answer question");
        let prompt = bot_message_prompt(&inputs, &[&ex], "answer question", Some("Paris is in France.")).render();
        assert!(prompt.starts_with("# This is how the bot talks:\n\nbot answer question\n  \"Paris.\"\n\n# This is some additional context:\n\nParis is in France.\n\n"));
        assert!(prompt.ends_with("user \"What is the capital?\"\n  ask question\nbot answer question\n"));
    }

    #[test]
    fn template_file_overrides_headers() {
        let t = PromptTemplate::from_yaml("name: terse\nuser_examples_header: '# Examples:'\n").unwrap();
        assert_eq!(t.name, "terse");
        assert_eq!(t.user_examples_header, "# Examples:");
        assert_eq!(t.current_conversation_header, PromptTemplate::default().current_conversation_header);
    }
}
