use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::value::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionStatus {
    Success,
    Failed,
}

/// Everything that happens in a session. Serialized with a `type` tag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Event {
    UtteranceUserActionFinished {
        text: String,
    },
    UserIntent {
        form: String,
        matched: bool,
    },
    StartAction {
        name: String,
        args: BTreeMap<String, Value>,
    },
    ActionFinished {
        name: String,
        return_value: Value,
        status: ActionStatus,
    },
    BotIntent {
        form: String,
    },
    StartUtteranceBotAction {
        text: String,
    },
    ContextUpdate {
        key: String,
        value: Value,
    },
    Listen,
}

impl Event {
    pub fn user(text: impl Into<String>) -> Event {
        Event::UtteranceUserActionFinished { text: text.into() }
    }

    pub fn context(key: impl Into<String>, value: impl Into<Value>) -> Event {
        Event::ContextUpdate {
            key: key.into(),
            value: value.into(),
        }
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Event::UtteranceUserActionFinished { .. } => "UtteranceUserActionFinished",
            Event::UserIntent { .. } => "UserIntent",
            Event::StartAction { .. } => "StartAction",
            Event::ActionFinished { .. } => "ActionFinished",
            Event::BotIntent { .. } => "BotIntent",
            Event::StartUtteranceBotAction { .. } => "StartUtteranceBotAction",
            Event::ContextUpdate { .. } => "ContextUpdate",
            Event::Listen => "Listen",
        }
    }
}

/// An event stamped with its position in the session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequencedEvent {
    pub seq: u64,
    #[serde(flatten)]
    pub event: Event,
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write>(mut out: W, events: &[SequencedEvent]) -> io::Result<()> {
    for ev in events {
        serde_json::to_writer(&mut out, ev)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads events written by [`write_jsonl`], skipping blank lines.
pub fn read_jsonl<R: BufRead>(input: R) -> io::Result<Vec<SequencedEvent>> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ev = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)))?;
        events.push(ev);
    }
    Ok(events)
}
