//! Event-driven dialogue runtime: sessions, flow heads and the per-turn
//! pipeline of input rails, intent, next step, bot message and output rails.

mod actions;
mod effects;
mod event;
mod expr;
mod program;
mod state;
mod turn;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use actions::{ActionContext, ActionError, ActionFn, ActionOutput, ActionRegistry, DuplicateAction};
pub use event::{read_jsonl, write_jsonl, ActionStatus, Event, SequencedEvent};
pub use expr::{eval_expression, interpolate};
pub use program::{FlowKind, FlowProgram, Step};
pub use state::{decide_next_step, fold_context, Decision, DialogueState, FlowHead, HeadStatus};
pub use turn::{BOT_MESSAGE_PROMPT, LAST_BOT_MESSAGE, LAST_USER_MESSAGE, RELEVANT_CHUNKS};

use crate::app::RailsApp;
use crate::embedding::EmbeddingError;
use crate::llm::{LlmCall, LlmError, PromptInputs};
use crate::rails::RailVerdict;
use effects::{Effects, LiveEffects, ReplayEffects};
use turn::TurnMachine;

/// Events a single turn may generate before it is treated as a loop.
pub const EVENT_BUDGET: usize = 100;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error(transparent)]
    DuplicateAction(#[from] DuplicateAction),
    #[error("turn exceeded {EVENT_BUDGET} events")]
    EventLoopOverflow,
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("bot form `{0}` used by a rail has no predefined message")]
    UndefinedRailMessage(String),
    #[error("replay diverged at event {seq}: {reason}")]
    ReplayDivergence { seq: u64, reason: String },
    /// Replay reached a turn that ended in the fallback message.
    #[error("the recorded turn failed")]
    RecordedFailure,
    #[error("a turn is already in progress")]
    TurnInProgress,
    #[error("unexpected event: {0}")]
    UnexpectedEvent(String),
}

#[derive(Clone, Debug, Default)]
pub struct TurnOptions {
    /// Example utterance excluded from few-shot retrieval.
    pub held_out: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntentTrace {
    pub form: String,
    pub matched: bool,
    /// Few-shot examples placed in the intent prompt.
    pub examples: Vec<String>,
}

/// What happened during one turn, for inspection.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TurnTrace {
    pub user_intent: Option<IntentTrace>,
    pub decision: Option<Decision>,
    pub rail_verdicts: Vec<RailVerdict>,
    pub llm_calls: Vec<LlmCall>,
    pub events: Vec<SequencedEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TurnOutcome {
    pub messages: Vec<String>,
    pub trace: TurnTrace,
}

struct TurnRun {
    messages: Vec<String>,
    decision: Option<Decision>,
    /// The failure that forced the fallback message.
    error: Option<RuntimeError>,
}

/// A loaded application ready to run sessions. Immutable and shareable.
pub struct Runtime {
    pub(crate) app: Arc<RailsApp>,
    pub(crate) actions: ActionRegistry,
    /// Input rails, then output rails, then dialogue flows.
    pub(crate) programs: Vec<FlowProgram>,
    pub(crate) input_rails: Vec<usize>,
    pub(crate) output_rails: Vec<usize>,
    hidden_actions: BTreeSet<String>,
}

impl std::fmt::Debug for Runtime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Runtime")
            .field("app", &self.app.config.id)
            .field("actions", &self.actions)
            .finish()
    }
}

impl Runtime {
    /// Fails when a flow executes an action missing from `actions`.
    pub fn new(app: Arc<RailsApp>, actions: ActionRegistry) -> Result<Self, RuntimeError> {
        let compiled: Vec<FlowProgram> = app.config.script.flows.iter().map(FlowProgram::compile).collect();
        let mut programs = Vec::with_capacity(compiled.len());
        for kind in [FlowKind::InputRail, FlowKind::OutputRail, FlowKind::Dialogue] {
            programs.extend(compiled.iter().filter(|p| p.kind == kind).cloned());
        }
        for action in programs.iter().flat_map(FlowProgram::actions) {
            if !actions.contains(action) {
                return Err(RuntimeError::UnknownAction(action.to_string()));
            }
        }
        let indices = |kind| {
            programs
                .iter()
                .enumerate()
                .filter(|(_, p)| p.kind == kind)
                .map(|(i, _)| i)
                .collect::<Vec<_>>()
        };
        let input_rails = indices(FlowKind::InputRail);
        let output_rails = indices(FlowKind::OutputRail);
        let hidden_actions = programs
            .iter()
            .filter(|p| p.is_rail())
            .flat_map(|p| p.actions().map(str::to_string))
            .collect();
        Ok(Runtime {
            app,
            actions,
            programs,
            input_rails,
            output_rails,
            hidden_actions,
        })
    }

    /// Registers the rail actions and the configured stubs, then [`Runtime::new`].
    pub fn with_builtins(app: Arc<RailsApp>) -> Result<Self, RuntimeError> {
        Self::with_actions(app, ActionRegistry::new())
    }

    /// Like [`Runtime::with_builtins`], starting from caller-provided actions.
    pub fn with_actions(app: Arc<RailsApp>, mut actions: ActionRegistry) -> Result<Self, RuntimeError> {
        crate::rails::register_builtin_actions(&mut actions)?;
        app.register_stubs(&mut actions)?;
        Self::new(app, actions)
    }

    pub fn app(&self) -> &RailsApp {
        &self.app
    }

    pub fn programs(&self) -> &[FlowProgram] {
        &self.programs
    }

    pub fn new_session(&self) -> DialogueState {
        DialogueState::new(self.app.config.id.clone(), &self.programs)
    }

    pub(crate) fn program_index(&self, name: &str) -> usize {
        self.programs
            .iter()
            .position(|p| p.name == name)
            .expect("decision names a compiled flow")
    }

    pub(crate) fn prompt_inputs<'a>(&'a self, state: &'a DialogueState) -> PromptInputs<'a> {
        let cfg = &self.app.config;
        PromptInputs {
            template: &cfg.prompt_template,
            instructions: &cfg.instructions,
            sample_conversation: &cfg.sample_conversation,
            history: &state.history,
            hidden_actions: &self.hidden_actions,
        }
    }

    pub fn run_turn(&self, state: &mut DialogueState, text: &str) -> Result<TurnOutcome, RuntimeError> {
        self.run_turn_with_options(state, text, TurnOptions::default())
    }

    /// Runs one user message through the pipeline. Provider and action
    /// failures do not surface as errors: the turn ends with the fallback
    /// message and the trace carries the error.
    pub fn run_turn_with_options(
        &self,
        state: &mut DialogueState,
        text: &str,
        opts: TurnOptions,
    ) -> Result<TurnOutcome, RuntimeError> {
        if state.turn_in_progress() {
            return Err(RuntimeError::TurnInProgress);
        }
        let start = state.history.len();
        let mut fx = LiveEffects::new(&self.app.gateway, opts.held_out);
        let run = self.drive(state, Event::user(text), &mut fx)?;
        let events = state.history[start..].to_vec();
        let user_intent = events.iter().find_map(|e| match &e.event {
            Event::UserIntent { form, matched } => Some(IntentTrace {
                form: form.clone(),
                matched: *matched,
                examples: fx.examples.clone(),
            }),
            _ => None,
        });
        let trace = TurnTrace {
            user_intent,
            decision: run.decision,
            rail_verdicts: fx.verdicts,
            llm_calls: fx.log.snapshot(),
            events,
            error: run.error.map(|e| e.to_string()),
        };
        Ok(TurnOutcome {
            messages: run.messages,
            trace,
        })
    }

    /// Feeds one external event and returns everything the runtime generated
    /// in response, up to and including `Listen`. A user utterance runs the
    /// whole turn; a `UserIntent` skips input rails and intent generation.
    pub fn process_event(&self, state: &mut DialogueState, event: Event) -> Result<Vec<Event>, RuntimeError> {
        if state.turn_in_progress() {
            return Err(RuntimeError::TurnInProgress);
        }
        let start = state.history.len();
        let mut fx = LiveEffects::new(&self.app.gateway, None);
        self.drive(state, event, &mut fx)?;
        Ok(state.history[start + 1..].iter().map(|e| e.event.clone()).collect())
    }

    /// Rebuilds a session from its recorded history, re-running every turn
    /// with answers taken from the recording. Fails on the first event the
    /// runtime would not have produced.
    pub fn replay(&self, events: &[SequencedEvent]) -> Result<DialogueState, RuntimeError> {
        let mut state = self.new_session();
        let mut fx = ReplayEffects {
            recorded: events,
            fallback_message: &self.app.config.dialogue.fallback_message,
        };
        while let Some(next) = events.get(state.history.len()) {
            if !matches!(next.event, Event::UtteranceUserActionFinished { .. } | Event::UserIntent { .. }) {
                return Err(RuntimeError::ReplayDivergence {
                    seq: next.seq,
                    reason: format!("a turn cannot start with {}", next.event.type_name()),
                });
            }
            self.drive(&mut state, next.event.clone(), &mut fx)?;
            if let Some((i, (ours, theirs))) = state
                .history
                .iter()
                .zip(events)
                .enumerate()
                .find(|(_, (a, b))| a != b)
            {
                return Err(RuntimeError::ReplayDivergence {
                    seq: i as u64,
                    reason: format!("replayed {:?}, recorded {:?}", ours.event, theirs.event),
                });
            }
            if state.history.len() > events.len() {
                return Err(RuntimeError::ReplayDivergence {
                    seq: events.len() as u64,
                    reason: "recording ended mid-turn".into(),
                });
            }
        }
        Ok(state)
    }

    /// Records `first` and runs the turn to `Listen`.
    fn drive(&self, state: &mut DialogueState, first: Event, fx: &mut dyn Effects) -> Result<TurnRun, RuntimeError> {
        let machine = match &first {
            Event::UtteranceUserActionFinished { .. } => TurnMachine::new(),
            Event::UserIntent { .. } => TurnMachine::at_decision(),
            other => return Err(RuntimeError::UnexpectedEvent(format!("{} cannot start a turn", other.type_name()))),
        };
        state.turn = Some(machine);
        state.record(first);
        let result = self.run_machine(state, fx);
        let error = match result {
            Ok(()) => None,
            Err(e @ RuntimeError::ReplayDivergence { .. }) => {
                state.turn = None;
                return Err(e);
            }
            Err(e) => {
                tracing::warn!(error = %e, "turn failed; sending the fallback message");
                self.abort_dialogue(state);
                state.record(Event::StartUtteranceBotAction {
                    text: self.app.config.dialogue.fallback_message.clone(),
                });
                state.record(Event::Listen);
                Some(e)
            }
        };
        let machine = state.turn.take().expect("turn in progress");
        Ok(TurnRun {
            messages: machine.messages,
            decision: machine.decision,
            error,
        })
    }

    fn run_machine(&self, state: &mut DialogueState, fx: &mut dyn Effects) -> Result<(), RuntimeError> {
        let mut emitted = 0;
        while let Some(event) = self.continue_turn(state, fx)? {
            emitted += 1;
            if emitted > EVENT_BUDGET {
                return Err(RuntimeError::EventLoopOverflow);
            }
            state.record(event);
        }
        Ok(())
    }
}
