//! The per-turn state machine. Each call to [`Runtime::continue_turn`]
//! produces at most one event; the caller records it and asks again until
//! `Listen`.

use std::collections::VecDeque;

use railgate_colang::{Form, REMOVE_LAST_MESSAGE};

use super::effects::Effects;
use super::event::Event;
use super::expr::{eval_expression, interpolate};
use super::program::Step;
use super::state::{decide_next_step, Decision, DialogueState, HeadStatus};
use super::{Runtime, RuntimeError};
use crate::value::Value;

pub const LAST_USER_MESSAGE: &str = "last_user_message";
pub const LAST_BOT_MESSAGE: &str = "last_bot_message";
pub const BOT_MESSAGE_PROMPT: &str = "bot_message_prompt";
pub const RELEVANT_CHUNKS: &str = "relevant_chunks";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Start,
    InputRails,
    Retrieve,
    Intent,
    Decide,
    Dialogue,
    Finish,
    Done,
}

#[derive(Clone, Debug, PartialEq)]
enum Source {
    Flow(usize),
    /// The single bot step chosen by the LLM.
    Generated(Step),
}

#[derive(Clone, Debug, PartialEq)]
struct Cursor {
    source: Source,
    ip: usize,
    /// Events already produced for the step at `ip`.
    progress: u8,
    scratch: Option<String>,
}

impl Cursor {
    fn new(source: Source, ip: usize) -> Self {
        Cursor {
            source,
            ip,
            progress: 0,
            scratch: None,
        }
    }

    fn goto(&mut self, ip: usize) {
        self.ip = ip;
        self.progress = 0;
        self.scratch = None;
    }

    fn advance(&mut self) {
        self.goto(self.ip + 1);
    }
}

/// A bot message waiting for the output rails.
#[derive(Clone, Debug, PartialEq)]
struct Vetting {
    candidate: String,
    next_rail: usize,
    dropped: bool,
    stopped: bool,
    /// Messages uttered by the rails, shown after the candidate.
    buffer: Vec<String>,
    /// Set once every rail has run: what remains to be uttered.
    flush: Option<VecDeque<String>>,
}

impl Vetting {
    fn finish(&mut self) {
        let mut out = VecDeque::new();
        if !self.dropped {
            out.push_back(self.candidate.clone());
        }
        out.extend(self.buffer.drain(..));
        self.flush = Some(out);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    InputRail,
    OutputRail,
    Main,
}

enum Outcome {
    Emit(Event),
    /// Paused on a user message.
    Wait,
    Complete,
    Stop,
    /// The main flow handed its message to the output rails.
    Suspend,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct TurnMachine {
    phase: Phase,
    next_input_rail: usize,
    rail: Option<Cursor>,
    main: Option<Cursor>,
    vetting: Option<Vetting>,
    pub(crate) decision: Option<Decision>,
    pub(crate) messages: Vec<String>,
}

impl TurnMachine {
    pub(crate) fn new() -> Self {
        TurnMachine {
            phase: Phase::Start,
            next_input_rail: 0,
            rail: None,
            main: None,
            vetting: None,
            decision: None,
            messages: Vec::new(),
        }
    }

    /// A turn started from an already known user intent.
    pub(crate) fn at_decision() -> Self {
        TurnMachine {
            phase: Phase::Decide,
            ..TurnMachine::new()
        }
    }

    fn slot(&mut self, role: Role) -> &mut Option<Cursor> {
        match role {
            Role::Main => &mut self.main,
            _ => &mut self.rail,
        }
    }
}

fn turn(state: &mut DialogueState) -> &mut TurnMachine {
    state.turn.as_mut().expect("no turn in progress")
}

fn unexpected(state: &DialogueState, wanted: &str) -> RuntimeError {
    RuntimeError::UnexpectedEvent(format!(
        "expected {wanted} before {:?}",
        state.last_event().map(Event::type_name)
    ))
}

impl Runtime {
    /// Produces the next event of the current turn, or `None` once `Listen`
    /// has been recorded.
    pub(crate) fn continue_turn(
        &self,
        state: &mut DialogueState,
        fx: &mut dyn Effects,
    ) -> Result<Option<Event>, RuntimeError> {
        loop {
            match turn(state).phase {
                Phase::Start => {
                    let text = match state.last_event() {
                        Some(Event::UtteranceUserActionFinished { text }) => text.clone(),
                        _ => return Err(unexpected(state, "a user utterance")),
                    };
                    turn(state).phase = Phase::InputRails;
                    return Ok(Some(Event::context(LAST_USER_MESSAGE, text)));
                }
                Phase::InputRails => {
                    if turn(state).rail.is_some() {
                        match self.step(state, Role::InputRail, fx)? {
                            Outcome::Emit(e) => return Ok(Some(e)),
                            Outcome::Stop => {
                                turn(state).rail = None;
                                self.abort_dialogue(state);
                                turn(state).phase = Phase::Finish;
                            }
                            _ => turn(state).rail = None,
                        }
                        continue;
                    }
                    let t = turn(state);
                    if let Some(&program) = self.input_rails.get(t.next_input_rail) {
                        t.next_input_rail += 1;
                        t.rail = Some(Cursor::new(Source::Flow(program), 1));
                    } else {
                        t.phase = Phase::Retrieve;
                    }
                }
                Phase::Retrieve => {
                    turn(state).phase = Phase::Intent;
                    if !self.app.indexes.knowledge.is_empty() {
                        let chunks = fx.retrieve(self, state)?;
                        return Ok(Some(Event::context(RELEVANT_CHUNKS, chunks)));
                    }
                }
                Phase::Intent => {
                    let (form, matched) = fx.user_intent(self, state)?;
                    turn(state).phase = Phase::Decide;
                    return Ok(Some(Event::UserIntent { form, matched }));
                }
                Phase::Decide => {
                    let intent = match state.last_event() {
                        Some(Event::UserIntent { form, .. }) => form.clone(),
                        _ => return Err(unexpected(state, "a user intent")),
                    };
                    let decision =
                        decide_next_step(state, &self.programs, &intent, self.app.config.dialogue.llm_fallback);
                    turn(state).decision = Some(decision.clone());
                    match decision {
                        Decision::FlowStep { flow_name, element } => {
                            let idx = self.program_index(&flow_name);
                            let head = &mut state.heads[idx];
                            head.status = HeadStatus::Active;
                            head.element_index = element;
                            let t = turn(state);
                            t.main = Some(Cursor::new(Source::Flow(idx), element));
                            t.phase = Phase::Dialogue;
                        }
                        Decision::LlmFallback => {
                            let form = fx.next_step(self, state, &intent)?;
                            let mut cursor = Cursor::new(Source::Generated(Step::BotEmit(Form::Named(form.clone()))), 0);
                            cursor.progress = 1;
                            let t = turn(state);
                            t.main = Some(cursor);
                            t.phase = Phase::Dialogue;
                            return Ok(Some(Event::BotIntent { form }));
                        }
                        Decision::NoOp => turn(state).phase = Phase::Finish,
                    }
                }
                Phase::Dialogue => {
                    if let Some(event) = self.drive_vetting(state, fx)? {
                        return Ok(Some(event));
                    }
                    if turn(state).vetting.as_ref().is_some_and(|v| v.flush.is_none()) {
                        continue;
                    }
                    match self.step(state, Role::Main, fx)? {
                        Outcome::Emit(e) => return Ok(Some(e)),
                        Outcome::Suspend => {}
                        Outcome::Wait => {
                            self.park_main(state, HeadStatus::Active);
                            turn(state).phase = Phase::Finish;
                        }
                        Outcome::Complete => {
                            self.park_main(state, HeadStatus::Completed);
                            turn(state).phase = Phase::Finish;
                        }
                        Outcome::Stop => {
                            self.abort_dialogue(state);
                            turn(state).phase = Phase::Finish;
                        }
                    }
                }
                Phase::Finish => {
                    turn(state).phase = Phase::Done;
                    return Ok(Some(Event::Listen));
                }
                Phase::Done => return Ok(None),
            }
        }
    }

    /// Runs output rails over a pending candidate. Returns an event to emit,
    /// or `None` when there is no unfinished vetting.
    fn drive_vetting(&self, state: &mut DialogueState, fx: &mut dyn Effects) -> Result<Option<Event>, RuntimeError> {
        loop {
            let t = turn(state);
            let Some(v) = t.vetting.as_mut() else { return Ok(None) };
            if v.flush.is_some() {
                return Ok(None);
            }
            if t.rail.is_some() {
                match self.step(state, Role::OutputRail, fx)? {
                    Outcome::Emit(e) => return Ok(Some(e)),
                    Outcome::Stop => {
                        let t = turn(state);
                        t.rail = None;
                        let v = t.vetting.as_mut().expect("vetting");
                        v.stopped = true;
                        v.dropped = true;
                        v.finish();
                    }
                    _ => turn(state).rail = None,
                }
                continue;
            }
            if let Some(&program) = self.output_rails.get(v.next_rail) {
                v.next_rail += 1;
                t.rail = Some(Cursor::new(Source::Flow(program), 1));
            } else {
                v.finish();
            }
        }
    }

    fn park_main(&self, state: &mut DialogueState, status: HeadStatus) {
        let Some(cursor) = turn(state).main.take() else { return };
        if let Source::Flow(idx) = cursor.source {
            let head = &mut state.heads[idx];
            head.status = status;
            head.element_index = if status == HeadStatus::Completed {
                self.programs[idx].steps.len()
            } else {
                cursor.ip
            };
        }
    }

    /// Aborts the running flow and every dialogue flow in progress.
    pub(crate) fn abort_dialogue(&self, state: &mut DialogueState) {
        if let Some(Cursor {
            source: Source::Flow(idx),
            ..
        }) = state.turn.as_mut().and_then(|t| t.main.take())
        {
            state.heads[idx].status = HeadStatus::Aborted;
        }
        for (head, program) in state.heads.iter_mut().zip(&self.programs) {
            if !program.is_rail() && head.status == HeadStatus::Active && head.element_index > 0 {
                head.status = HeadStatus::Aborted;
            }
        }
    }

    fn steps<'a>(&'a self, source: &'a Source) -> &'a [Step] {
        match source {
            Source::Flow(i) => &self.programs[*i].steps,
            Source::Generated(step) => std::slice::from_ref(step),
        }
    }

    fn step(&self, state: &mut DialogueState, role: Role, fx: &mut dyn Effects) -> Result<Outcome, RuntimeError> {
        let mut cursor = turn(state).slot(role).clone().expect("no cursor for role");
        let result = self.step_cursor(state, role, &mut cursor, fx);
        if let Some(t) = state.turn.as_mut() {
            if t.slot(role).is_some() {
                *t.slot(role) = Some(cursor);
            }
        }
        result
    }

    fn step_cursor(
        &self,
        state: &mut DialogueState,
        role: Role,
        cur: &mut Cursor,
        fx: &mut dyn Effects,
    ) -> Result<Outcome, RuntimeError> {
        loop {
            let Some(step) = self.steps(&cur.source).get(cur.ip) else {
                return Ok(Outcome::Complete);
            };
            match step {
                Step::UserMatch(_) => {
                    return Ok(if role == Role::Main {
                        Outcome::Wait
                    } else {
                        Outcome::Complete
                    })
                }
                Step::Stop => return Ok(Outcome::Stop),
                Step::Jump(target) => cur.goto(*target),
                Step::JumpUnless { cond, target } => {
                    if eval_expression(&state.context, cond).truthy() {
                        cur.advance();
                    } else {
                        cur.goto(*target);
                    }
                }
                Step::Assign { var, expr } => {
                    if cur.progress == 0 {
                        cur.progress = 1;
                        return Ok(Outcome::Emit(Event::context(var.clone(), eval_expression(&state.context, expr))));
                    }
                    cur.advance();
                }
                Step::Execute {
                    action,
                    args,
                    result_var,
                } => match cur.progress {
                    0 => {
                        cur.progress = 1;
                        let args = args
                            .iter()
                            .map(|(k, e)| (k.clone(), eval_expression(&state.context, e)))
                            .collect();
                        return Ok(Outcome::Emit(Event::StartAction {
                            name: action.clone(),
                            args,
                        }));
                    }
                    1 => {
                        let args = match state.last_event() {
                            Some(Event::StartAction { args, .. }) => args.clone(),
                            _ => return Err(unexpected(state, "StartAction")),
                        };
                        let (return_value, status) = fx.action(self, state, action, &args)?;
                        cur.progress = 2;
                        return Ok(Outcome::Emit(Event::ActionFinished {
                            name: action.clone(),
                            return_value,
                            status,
                        }));
                    }
                    2 => match result_var {
                        Some(var) => {
                            let value = match state.last_event() {
                                Some(Event::ActionFinished { return_value, .. }) => return_value.clone(),
                                _ => return Err(unexpected(state, "ActionFinished")),
                            };
                            cur.progress = 3;
                            return Ok(Outcome::Emit(Event::context(var.clone(), value)));
                        }
                        None => cur.advance(),
                    },
                    _ => cur.advance(),
                },
                Step::BotEmit(Form::Wildcard) => cur.advance(),
                Step::BotEmit(Form::Named(form)) => match cur.progress {
                    0 => {
                        cur.progress = 1;
                        return Ok(Outcome::Emit(Event::BotIntent { form: form.clone() }));
                    }
                    1 => {
                        if form == REMOVE_LAST_MESSAGE {
                            remove_last_message(state, role);
                            cur.advance();
                            continue;
                        }
                        let (text, prompt) = match self.predefined_message(form, state) {
                            Some(text) => (text, None),
                            None if role == Role::Main => fx.bot_message(self, state, form)?,
                            None => return Err(RuntimeError::UndefinedRailMessage(form.clone())),
                        };
                        cur.scratch = Some(text.clone());
                        cur.progress = 3;
                        if role != Role::Main {
                            continue;
                        }
                        let prompt = Value::from(prompt);
                        let current = state.context.get(BOT_MESSAGE_PROMPT).cloned().unwrap_or_default();
                        if current != prompt {
                            cur.progress = 2;
                            return Ok(Outcome::Emit(Event::context(BOT_MESSAGE_PROMPT, prompt)));
                        }
                        return Ok(Outcome::Emit(Event::context(LAST_BOT_MESSAGE, text)));
                    }
                    2 => {
                        cur.progress = 3;
                        let text = cur.scratch.clone().unwrap_or_default();
                        return Ok(Outcome::Emit(Event::context(LAST_BOT_MESSAGE, text)));
                    }
                    3 => {
                        let text = cur.scratch.clone().unwrap_or_default();
                        match role {
                            Role::InputRail => {
                                cur.progress = 5;
                                return Ok(Outcome::Emit(Event::StartUtteranceBotAction { text }));
                            }
                            Role::OutputRail => {
                                if let Some(v) = turn(state).vetting.as_mut() {
                                    v.buffer.push(text);
                                }
                                cur.advance();
                            }
                            Role::Main if self.output_rails.is_empty() => {
                                cur.progress = 5;
                                return Ok(Outcome::Emit(Event::StartUtteranceBotAction { text }));
                            }
                            Role::Main => {
                                cur.progress = 4;
                                turn(state).vetting = Some(Vetting {
                                    candidate: text,
                                    next_rail: 0,
                                    dropped: false,
                                    stopped: false,
                                    buffer: Vec::new(),
                                    flush: None,
                                });
                                return Ok(Outcome::Suspend);
                            }
                        }
                    }
                    4 => {
                        let t = turn(state);
                        let v = t.vetting.as_mut().expect("vetting result");
                        if let Some(next) = v.flush.as_mut().and_then(VecDeque::pop_front) {
                            return Ok(Outcome::Emit(Event::StartUtteranceBotAction { text: next }));
                        }
                        let stopped = v.stopped;
                        t.vetting = None;
                        if stopped {
                            return Ok(Outcome::Stop);
                        }
                        cur.advance();
                    }
                    _ => cur.advance(),
                },
            }
        }
    }

    /// First utterance of the form's definition, with `$var` filled in.
    fn predefined_message(&self, form: &str, state: &DialogueState) -> Option<String> {
        self.app
            .config
            .script
            .bot_def(form)
            .and_then(|d| d.utterances.first())
            .map(|u| interpolate(u, &state.context))
    }
}

/// In an output rail this drops the message under review; elsewhere it
/// withdraws the last message of the turn.
fn remove_last_message(state: &mut DialogueState, role: Role) {
    let t = turn(state);
    match (role, t.vetting.as_mut()) {
        (Role::OutputRail, Some(v)) if !v.dropped => v.dropped = true,
        (Role::OutputRail, Some(v)) => {
            v.buffer.pop();
        }
        _ => {
            t.messages.pop();
        }
    }
}
