//! Moderation rails: how many harmful prompts are blocked and how many
//! helpful ones get through, with the input rail, the output rail or both.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use railgate_core::rails::{RailKind, RailVerdict};
use serde::Serialize;

use crate::dataset::PromptRecord;
use crate::topical::write_records;
use crate::{ratio, EvalEnv, EvalError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModerationMode {
    Input,
    Output,
    Both,
}

impl ModerationMode {
    pub const ALL: [ModerationMode; 3] = [ModerationMode::Input, ModerationMode::Output, ModerationMode::Both];

    fn rails(self) -> (&'static [RailKind], &'static [RailKind]) {
        const IN: &[RailKind] = &[RailKind::Jailbreak];
        const OUT: &[RailKind] = &[RailKind::OutputModeration];
        match self {
            ModerationMode::Input => (IN, &[]),
            ModerationMode::Output => (&[], OUT),
            ModerationMode::Both => (IN, OUT),
        }
    }
}

impl fmt::Display for ModerationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModerationMode::Input => "input",
            ModerationMode::Output => "output",
            ModerationMode::Both => "both",
        })
    }
}

impl FromStr for ModerationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "input" => Ok(ModerationMode::Input),
            "output" => Ok(ModerationMode::Output),
            "both" => Ok(ModerationMode::Both),
            _ => Err(format!("expected input, output or both, found `{s}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModerationMetrics {
    pub mode: ModerationMode,
    pub harmful_blocked_rate: f64,
    pub helpful_allowed_rate: f64,
    pub n_harmful: usize,
    pub n_helpful: usize,
    pub harmful_blocked: usize,
    pub helpful_allowed: usize,
    /// Harmful prompts stopped by the input rail and by the output rail.
    pub blocked_by_input: usize,
    pub blocked_by_output: usize,
    /// Records whose turn failed; they count as blocked.
    pub errors: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModerationRecord {
    pub index: usize,
    pub prompt: String,
    pub harmful: bool,
    pub blocked: bool,
    pub messages: Vec<String>,
    pub verdicts: Vec<RailVerdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModerationRun {
    pub metrics: ModerationMetrics,
    pub records: Vec<ModerationRecord>,
}

impl ModerationRun {
    pub fn write_jsonl<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write_records(w, &self.records)
    }
}

/// Sends every prompt through the base app with the rails of `mode`. A
/// prompt is blocked when any rail verdict disallows it or the turn fails.
pub fn eval_moderation(
    env: &EvalEnv,
    harmful: &[String],
    helpful: &[String],
    mode: ModerationMode,
) -> Result<ModerationRun, EvalError> {
    if harmful.is_empty() {
        return Err(EvalError::Empty("harmful prompt set"));
    }
    if helpful.is_empty() {
        return Err(EvalError::Empty("helpful prompt set"));
    }
    let mut script = env.base.script.clone();
    script.flows.retain(|f| !f.is_input_rail() && !f.is_output_rail());
    let (input, output) = mode.rails();
    let rt = env.runtime(script, input, output, env.base.retrieval.clone())?;

    let prompts = harmful.iter().map(|p| (p, true)).chain(helpful.iter().map(|p| (p, false)));
    let mut records = Vec::with_capacity(harmful.len() + helpful.len());
    for (index, (prompt, is_harmful)) in prompts.enumerate() {
        let mut state = rt.new_session();
        let out = rt.run_turn(&mut state, prompt)?;
        if let Some(e) = &out.trace.error {
            tracing::warn!(index, error = %e, "moderation record failed; counted as blocked");
        }
        let blocked = out.trace.error.is_some() || out.trace.rail_verdicts.iter().any(|v| !v.allowed);
        records.push(ModerationRecord {
            index,
            prompt: prompt.clone(),
            harmful: is_harmful,
            blocked,
            messages: out.messages,
            verdicts: out.trace.rail_verdicts,
            error: out.trace.error,
        });
    }

    let stopped_by = |rail: RailKind| {
        records
            .iter()
            .filter(|r| r.harmful && r.verdicts.iter().any(|v| v.rail == rail && !v.allowed))
            .count()
    };
    let harmful_blocked = records.iter().filter(|r| r.harmful && r.blocked).count();
    let helpful_allowed = records.iter().filter(|r| !r.harmful && !r.blocked).count();
    let metrics = ModerationMetrics {
        mode,
        harmful_blocked_rate: ratio(harmful_blocked, harmful.len()),
        helpful_allowed_rate: ratio(helpful_allowed, helpful.len()),
        n_harmful: harmful.len(),
        n_helpful: helpful.len(),
        harmful_blocked,
        helpful_allowed,
        blocked_by_input: stopped_by(RailKind::Jailbreak),
        blocked_by_output: stopped_by(RailKind::OutputModeration),
        errors: records.iter().filter(|r| r.error.is_some()).count(),
    };
    Ok(ModerationRun { metrics, records })
}

/// Splits a labelled prompt set into (harmful, helpful).
pub fn split_prompts(records: &[PromptRecord]) -> (Vec<String>, Vec<String>) {
    let (harmful, helpful): (Vec<&PromptRecord>, Vec<&PromptRecord>) = records.iter().partition(|r| r.harmful);
    (
        harmful.into_iter().map(|r| r.prompt.clone()).collect(),
        helpful.into_iter().map(|r| r.prompt.clone()).collect(),
    )
}
