//! Everything a turn needs from the outside world. Live effects call the
//! providers and actions; replay effects read the answers back from a
//! recorded history.

use std::collections::BTreeMap;

use super::actions::ActionContext;
use super::event::{ActionStatus, Event, SequencedEvent};
use super::state::DialogueState;
use super::turn::{BOT_MESSAGE_PROMPT, LAST_BOT_MESSAGE, LAST_USER_MESSAGE, RELEVANT_CHUNKS};
use super::{Runtime, RuntimeError};
use crate::llm::{generate_bot_message, generate_next_step, generate_user_intent, CallLog, Gateway, IntentRequest, LlmError};
use crate::rails::RailVerdict;
use crate::value::Value;

pub(crate) trait Effects {
    fn retrieve(&mut self, rt: &Runtime, state: &DialogueState) -> Result<String, RuntimeError>;
    /// The user's canonical form and whether it matched a defined one.
    fn user_intent(&mut self, rt: &Runtime, state: &DialogueState) -> Result<(String, bool), RuntimeError>;
    fn next_step(&mut self, rt: &Runtime, state: &DialogueState, intent: &str) -> Result<String, RuntimeError>;
    /// Utterance text and the prompt that produced it.
    fn bot_message(&mut self, rt: &Runtime, state: &DialogueState, form: &str)
        -> Result<(String, Option<String>), RuntimeError>;
    fn action(
        &mut self,
        rt: &Runtime,
        state: &DialogueState,
        name: &str,
        args: &BTreeMap<String, Value>,
    ) -> Result<(Value, ActionStatus), RuntimeError>;
}

pub(crate) struct LiveEffects {
    gateway: Gateway,
    pub(crate) log: CallLog,
    pub(crate) verdicts: Vec<RailVerdict>,
    pub(crate) examples: Vec<String>,
    held_out: Option<String>,
}

impl LiveEffects {
    pub(crate) fn new(gateway: &Gateway, held_out: Option<String>) -> Self {
        let (gateway, log) = gateway.recording();
        LiveEffects {
            gateway,
            log,
            verdicts: Vec::new(),
            examples: Vec::new(),
            held_out,
        }
    }
}

fn text_of(state: &DialogueState, key: &str) -> String {
    state.context.get(key).and_then(Value::as_text).unwrap_or_default().to_string()
}

impl Effects for LiveEffects {
    fn retrieve(&mut self, rt: &Runtime, state: &DialogueState) -> Result<String, RuntimeError> {
        Ok(rt.app.retrieve_chunks(&text_of(state, LAST_USER_MESSAGE))?)
    }

    fn user_intent(&mut self, rt: &Runtime, state: &DialogueState) -> Result<(String, bool), RuntimeError> {
        let app = &rt.app;
        let utterance = text_of(state, LAST_USER_MESSAGE);
        let req = IntentRequest {
            inputs: rt.prompt_inputs(state),
            utterance: &utterance,
            examples: &app.indexes.user_examples,
            k: app.config.retrieval.k_examples,
            forms: &app.forms,
            threshold: app.config.retrieval.similarity_threshold,
            embedder: app.embedder.as_ref(),
            held_out: self.held_out.as_deref(),
        };
        let intent = generate_user_intent(&self.gateway, &req)?;
        self.examples = intent.examples;
        Ok((intent.form, intent.matched))
    }

    fn next_step(&mut self, rt: &Runtime, state: &DialogueState, intent: &str) -> Result<String, RuntimeError> {
        let app = &rt.app;
        let result = generate_next_step(
            &self.gateway,
            &rt.prompt_inputs(state),
            intent,
            &app.indexes.flows,
            app.config.retrieval.k_examples,
            app.embedder.as_ref(),
        );
        match result {
            Err(LlmError::MalformedStep(line)) => {
                tracing::warn!(%line, "malformed next step; using the default bot intent");
                Ok(app.config.dialogue.default_bot_intent.clone())
            }
            other => Ok(other?),
        }
    }

    fn bot_message(
        &mut self,
        rt: &Runtime,
        state: &DialogueState,
        form: &str,
    ) -> Result<(String, Option<String>), RuntimeError> {
        let app = &rt.app;
        let chunks = state.context.get(RELEVANT_CHUNKS).and_then(Value::as_text);
        let msg = generate_bot_message(
            &self.gateway,
            &rt.prompt_inputs(state),
            form,
            &app.indexes.bot_examples,
            app.config.retrieval.k_examples,
            app.embedder.as_ref(),
            chunks,
        )?;
        Ok((msg.text, Some(msg.prompt)))
    }

    fn action(
        &mut self,
        rt: &Runtime,
        state: &DialogueState,
        name: &str,
        args: &BTreeMap<String, Value>,
    ) -> Result<(Value, ActionStatus), RuntimeError> {
        let action = rt
            .actions
            .get(name)
            .ok_or_else(|| RuntimeError::UnknownAction(name.to_string()))?;
        let ctx = ActionContext {
            args,
            context: &state.context,
            gateway: &self.gateway,
            app: &rt.app,
        };
        match action(&ctx) {
            Ok(out) => {
                self.verdicts.extend(out.verdict);
                Ok((out.value, ActionStatus::Success))
            }
            Err(e) => {
                tracing::warn!(action = name, error = %e, "action failed");
                Ok((Value::Null, ActionStatus::Failed))
            }
        }
    }
}

/// Answers every effect from the event recorded at the position the live
/// run produced it.
pub(crate) struct ReplayEffects<'a> {
    pub(crate) recorded: &'a [SequencedEvent],
    pub(crate) fallback_message: &'a str,
}

impl ReplayEffects<'_> {
    fn at(&self, seq: usize) -> Result<&Event, RuntimeError> {
        self.recorded
            .get(seq)
            .map(|e| &e.event)
            .ok_or_else(|| RuntimeError::ReplayDivergence {
                seq: seq as u64,
                reason: "recording ended mid-turn".into(),
            })
    }

    fn next(&self, state: &DialogueState) -> Result<&Event, RuntimeError> {
        let seq = state.history.len();
        let event = self.at(seq)?;
        if let Event::StartUtteranceBotAction { text } = event {
            if text == self.fallback_message {
                return Err(RuntimeError::RecordedFailure);
            }
        }
        Ok(event)
    }

    fn diverged(&self, state: &DialogueState, wanted: &str) -> RuntimeError {
        let seq = state.history.len();
        let found = self.recorded.get(seq).map(|e| e.event.type_name()).unwrap_or("end of recording");
        RuntimeError::ReplayDivergence {
            seq: seq as u64,
            reason: format!("expected {wanted}, recording has {found}"),
        }
    }
}

impl Effects for ReplayEffects<'_> {
    fn retrieve(&mut self, _: &Runtime, state: &DialogueState) -> Result<String, RuntimeError> {
        match self.next(state)? {
            Event::ContextUpdate { key, value } if key == RELEVANT_CHUNKS => Ok(value.to_string()),
            _ => Err(self.diverged(state, "retrieved chunks")),
        }
    }

    fn user_intent(&mut self, _: &Runtime, state: &DialogueState) -> Result<(String, bool), RuntimeError> {
        match self.next(state)? {
            Event::UserIntent { form, matched } => Ok((form.clone(), *matched)),
            _ => Err(self.diverged(state, "UserIntent")),
        }
    }

    fn next_step(&mut self, _: &Runtime, state: &DialogueState, _: &str) -> Result<String, RuntimeError> {
        match self.next(state)? {
            Event::BotIntent { form } => Ok(form.clone()),
            _ => Err(self.diverged(state, "BotIntent")),
        }
    }

    fn bot_message(
        &mut self,
        _: &Runtime,
        state: &DialogueState,
        _: &str,
    ) -> Result<(String, Option<String>), RuntimeError> {
        let seq = state.history.len();
        let (prompt, text_event) = match self.next(state)? {
            Event::ContextUpdate { key, value } if key == BOT_MESSAGE_PROMPT => {
                (value.as_text().map(str::to_string), self.at(seq + 1)?)
            }
            other => (
                state.context.get(BOT_MESSAGE_PROMPT).and_then(Value::as_text).map(str::to_string),
                other,
            ),
        };
        match text_event {
            Event::ContextUpdate { key, value } if key == LAST_BOT_MESSAGE => Ok((value.to_string(), prompt)),
            _ => Err(self.diverged(state, "bot message")),
        }
    }

    fn action(
        &mut self,
        _: &Runtime,
        state: &DialogueState,
        name: &str,
        _: &BTreeMap<String, Value>,
    ) -> Result<(Value, ActionStatus), RuntimeError> {
        match self.next(state)? {
            Event::ActionFinished {
                name: recorded,
                return_value,
                status,
            } if recorded == name => Ok((return_value.clone(), *status)),
            _ => Err(self.diverged(state, "ActionFinished")),
        }
    }
}
