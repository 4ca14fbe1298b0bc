use std::collections::BTreeMap;

use railgate_colang::Form;
use serde::{Deserialize, Serialize};

use super::event::{Event, SequencedEvent};
use super::program::{FlowProgram, Step};
use super::turn::TurnMachine;
use crate::value::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadStatus {
    Active,
    Completed,
    Aborted,
}

/// Position of one flow. `element_index` points into the compiled program.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowHead {
    pub flow_name: String,
    pub element_index: usize,
    pub status: HeadStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    pub config_id: String,
    pub history: Vec<SequencedEvent>,
    pub context: BTreeMap<String, Value>,
    /// One head per flow, in program order.
    pub heads: Vec<FlowHead>,
    #[serde(skip)]
    pub(crate) turn: Option<TurnMachine>,
}

impl DialogueState {
    pub fn new(config_id: impl Into<String>, programs: &[FlowProgram]) -> Self {
        DialogueState {
            config_id: config_id.into(),
            history: Vec::new(),
            context: BTreeMap::new(),
            heads: programs
                .iter()
                .map(|p| FlowHead {
                    flow_name: p.name.clone(),
                    element_index: 0,
                    status: HeadStatus::Active,
                })
                .collect(),
            turn: None,
        }
    }

    pub fn last_event(&self) -> Option<&Event> {
        self.history.last().map(|e| &e.event)
    }

    /// True between a user utterance and the `Listen` that closes its turn.
    pub fn turn_in_progress(&self) -> bool {
        self.turn.is_some()
    }

    /// Appends an event with the next sequence number and applies it.
    pub(crate) fn record(&mut self, event: Event) {
        match &event {
            Event::ContextUpdate { key, value } => {
                self.context.insert(key.clone(), value.clone());
            }
            Event::StartUtteranceBotAction { text } => {
                if let Some(turn) = self.turn.as_mut() {
                    turn.messages.push(text.clone());
                }
            }
            _ => {}
        }
        let seq = self.history.len() as u64;
        self.history.push(SequencedEvent { seq, event });
    }
}

/// The context obtained by applying every `ContextUpdate` in order.
pub fn fold_context(history: &[SequencedEvent]) -> BTreeMap<String, Value> {
    let mut context = BTreeMap::new();
    for ev in history {
        if let Event::ContextUpdate { key, value } = &ev.event {
            context.insert(key.clone(), value.clone());
        }
    }
    context
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decision {
    /// Continue `flow_name` from step `element`, just after the matched user message.
    FlowStep { flow_name: String, element: usize },
    LlmFallback,
    NoOp,
}

fn expects(step: Option<&Step>, intent: &str, mid_flow: bool) -> bool {
    match step {
        Some(Step::UserMatch(Form::Named(f))) => f == intent,
        Some(Step::UserMatch(Form::Wildcard)) => mid_flow,
        _ => false,
    }
}

/// Picks what handles `intent`: a flow in progress waiting for it, then a
/// flow not yet started, then a finished flow restarted from the top, then
/// the LLM. Ties go to the earlier flow.
pub fn decide_next_step(state: &DialogueState, programs: &[FlowProgram], intent: &str, allow_fallback: bool) -> Decision {
    let dialogue = || {
        state
            .heads
            .iter()
            .zip(programs)
            .filter(|(_, p)| !p.is_rail())
    };
    let mid_flow = dialogue().find(|(h, p)| {
        h.status == HeadStatus::Active && h.element_index > 0 && expects(p.steps.get(h.element_index), intent, true)
    });
    let fresh = || {
        dialogue().find(|(h, p)| {
            h.status == HeadStatus::Active && h.element_index == 0 && expects(p.steps.first(), intent, false)
        })
    };
    let restart = || {
        dialogue().find(|(h, p)| h.status != HeadStatus::Active && expects(p.steps.first(), intent, false))
    };
    match mid_flow.or_else(fresh).or_else(restart) {
        Some((h, p)) => Decision::FlowStep {
            flow_name: p.name.clone(),
            element: if h.status == HeadStatus::Active { h.element_index + 1 } else { 1 },
        },
        None if allow_fallback => Decision::LlmFallback,
        None => Decision::NoOp,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use railgate_colang::parse_script;

    fn programs(src: &str) -> Vec<FlowProgram> {
        parse_script(src).unwrap().flows.iter().map(FlowProgram::compile).collect()
    }

    #[test]
    fn new_session_heads() {
        let p = programs("define flow a\n  user x\ndefine flow b\n  user y\ndefine flow c\n  user z\n");
        let s = DialogueState::new("app", &p);
        assert_eq!(s.heads.len(), 3);
        assert!(s.heads.iter().all(|h| h.element_index == 0 && h.status == HeadStatus::Active));
        assert!(DialogueState::new("app", &[]).heads.is_empty());
    }

    #[test]
    fn decision_priorities() {
        let p = programs(
            "define flow first\n  user greet\n  bot greet\n\
             define flow second\n  user greet\n  bot wave\n\
             define flow booking\n  user book\n  bot ask where\n  user greet\n  bot confirm\n\
             define flow rail\n  user ...\n  bot log\n",
        );
        let mut s = DialogueState::new("app", &p);
        assert_eq!(
            decide_next_step(&s, &p, "greet", true),
            Decision::FlowStep {
                flow_name: "first".into(),
                element: 1
            }
        );
        assert_eq!(decide_next_step(&s, &p, "unknown", true), Decision::LlmFallback);
        assert_eq!(decide_next_step(&s, &p, "unknown", false), Decision::NoOp);

        // a flow in progress waiting for the intent wins over fresh flows
        s.heads[2].element_index = 2;
        assert_eq!(
            decide_next_step(&s, &p, "greet", true),
            Decision::FlowStep {
                flow_name: "booking".into(),
                element: 3
            }
        );

        // completed flows restart when nothing else matches
        s.heads[2].element_index = 0;
        s.heads[0].status = HeadStatus::Completed;
        s.heads[1].status = HeadStatus::Aborted;
        assert_eq!(
            decide_next_step(&s, &p, "greet", true),
            Decision::FlowStep {
                flow_name: "first".into(),
                element: 1
            }
        );
    }

    #[test]
    fn mid_flow_wildcard_takes_anything() {
        let p = programs("define flow feedback\n  user ask feedback\n  bot ask rating\n  user ...\n  bot thank\n");
        let mut s = DialogueState::new("app", &p);
        assert_eq!(decide_next_step(&s, &p, "anything", true), Decision::LlmFallback);
        s.heads[0].element_index = 2;
        assert_eq!(
            decide_next_step(&s, &p, "anything", true),
            Decision::FlowStep {
                flow_name: "feedback".into(),
                element: 3
            }
        );
    }

    #[test]
    fn fold_matches_updates() {
        let mut s = DialogueState::new("app", &[]);
        s.record(Event::context("a", 1.0));
        s.record(Event::user("hi"));
        s.record(Event::context("a", "x"));
        assert_eq!(fold_context(&s.history), s.context);
        assert_eq!(s.history.iter().map(|e| e.seq).collect::<Vec<_>>(), [0, 1, 2]);
    }
}
