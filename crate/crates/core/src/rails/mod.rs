//! Execution rails judged by an LLM: fact checking, self-consistency
//! hallucination detection, jailbreak detection and output moderation.

mod actions;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{Gateway, LlmError, TaskKind};

pub use actions::register_builtin_actions;

pub const FACT_CHECK_TEMPLATE: &str = include_str!("../../templates/fact_check.txt");
pub const HALLUCINATION_TEMPLATE: &str = include_str!("../../templates/hallucination.txt");
pub const JAILBREAK_TEMPLATE: &str = include_str!("../../templates/jailbreak.txt");
pub const OUTPUT_MODERATION_TEMPLATE: &str = include_str!("../../templates/output_moderation.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RailKind {
    FactCheck,
    Hallucination,
    Jailbreak,
    OutputModeration,
}

impl RailKind {
    pub const ALL: [RailKind; 4] = [
        RailKind::FactCheck,
        RailKind::Hallucination,
        RailKind::Jailbreak,
        RailKind::OutputModeration,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RailKind::FactCheck => "fact_check",
            RailKind::Hallucination => "hallucination",
            RailKind::Jailbreak => "jailbreak",
            RailKind::OutputModeration => "output_moderation",
        }
    }

    /// Whether a judgment lets the content through. Jailbreak asks "is this
    /// an attack?", the others ask "is this acceptable?". Indeterminate
    /// answers never allow.
    pub fn allows(self, judgment: Judgment) -> bool {
        match self {
            RailKind::Jailbreak => judgment == Judgment::No,
            _ => judgment == Judgment::Yes,
        }
    }
}

impl fmt::Display for RailKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Judgment {
    Yes,
    No,
    Indeterminate,
}

/// Reads a yes/no answer by whole words: any "no" wins, then any "yes".
pub fn parse_yes_no(text: &str) -> Judgment {
    let lower = text.trim().to_lowercase();
    let words: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).collect();
    if words.contains(&"no") {
        Judgment::No
    } else if words.contains(&"yes") {
        Judgment::Yes
    } else {
        Judgment::Indeterminate
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RailVerdict {
    pub rail: RailKind,
    pub allowed: bool,
    pub raw_judgment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    /// Set when the judgment could not be obtained; such verdicts never allow.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RailVerdict {
    fn judged(rail: RailKind, raw: String) -> Self {
        RailVerdict {
            rail,
            allowed: rail.allows(parse_yes_no(&raw)),
            raw_judgment: raw,
            detail: None,
            error: None,
        }
    }

    fn failed(rail: RailKind, err: &LlmError) -> Self {
        tracing::warn!(rail = %rail, error = %err, "rail judgment failed; blocking");
        RailVerdict {
            rail,
            allowed: false,
            raw_judgment: String::new(),
            detail: None,
            error: Some(err.to_string()),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TemplateError {
    #[error("unknown placeholder `{0}` in rail template")]
    UnknownPlaceholder(String),
    #[error("unclosed placeholder in rail template")]
    Unclosed,
}

#[derive(Debug, Error)]
pub enum RailError {
    #[error("{0} must not be empty")]
    EmptyInput(&'static str),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("hallucination check needs n_samples >= 2, got {0}")]
    TooFewSamples(usize),
}

/// Substitutes `{{ name }}` placeholders; whitespace inside the braces is optional.
pub fn render_template(template: &str, vars: &[(&str, &str)]) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or(TemplateError::Unclosed)?;
        let name = after[..end].trim();
        let value = vars
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| TemplateError::UnknownPlaceholder(name.to_string()))?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Prompt templates for the four rails; defaults are the published ones.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RailTemplates {
    pub fact_check: String,
    pub hallucination: String,
    pub jailbreak: String,
    pub output_moderation: String,
}

impl Default for RailTemplates {
    fn default() -> Self {
        RailTemplates {
            fact_check: FACT_CHECK_TEMPLATE.to_string(),
            hallucination: HALLUCINATION_TEMPLATE.to_string(),
            jailbreak: JAILBREAK_TEMPLATE.to_string(),
            output_moderation: OUTPUT_MODERATION_TEMPLATE.to_string(),
        }
    }
}

impl RailTemplates {
    pub fn get(&self, rail: RailKind) -> &str {
        match rail {
            RailKind::FactCheck => &self.fact_check,
            RailKind::Hallucination => &self.hallucination,
            RailKind::Jailbreak => &self.jailbreak,
            RailKind::OutputModeration => &self.output_moderation,
        }
    }

    pub fn set(&mut self, rail: RailKind, text: String) {
        match rail {
            RailKind::FactCheck => self.fact_check = text,
            RailKind::Hallucination => self.hallucination = text,
            RailKind::Jailbreak => self.jailbreak = text,
            RailKind::OutputModeration => self.output_moderation = text,
        }
    }

    /// Renders each template with its own placeholders to catch typos early.
    pub fn check(&self) -> Result<(), (RailKind, TemplateError)> {
        let probes: [(RailKind, &[&str]); 4] = [
            (RailKind::FactCheck, &["evidence", "bot_response"]),
            (RailKind::Hallucination, &["sampled_responses", "bot_response"]),
            (RailKind::Jailbreak, &["user_input"]),
            (RailKind::OutputModeration, &["bot_response"]),
        ];
        for (rail, names) in probes {
            let vars: Vec<(&str, &str)> = names.iter().map(|n| (*n, "x")).collect();
            render_template(self.get(rail), &vars).map_err(|e| (rail, e))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HallucinationConfig {
    /// Responses compared, counting the original answer.
    pub n_samples: usize,
    pub sample_temperature: f64,
}

impl Default for HallucinationConfig {
    fn default() -> Self {
        HallucinationConfig {
            n_samples: 3,
            sample_temperature: 1.0,
        }
    }
}

fn nonempty<'a>(text: &'a str, what: &'static str) -> Result<&'a str, RailError> {
    if text.trim().is_empty() {
        Err(RailError::EmptyInput(what))
    } else {
        Ok(text)
    }
}

fn judge(gateway: &Gateway, rail: RailKind, prompt: String) -> RailVerdict {
    match gateway.run(TaskKind::RailJudgment, prompt) {
        Ok(c) => RailVerdict::judged(rail, c.text),
        Err(e) => RailVerdict::failed(rail, &e),
    }
}

/// Is `bot_response` entailed by `evidence`?
pub fn check_facts(
    gateway: &Gateway,
    templates: &RailTemplates,
    evidence: &str,
    bot_response: &str,
) -> Result<RailVerdict, RailError> {
    let evidence = nonempty(evidence, "evidence")?;
    let bot_response = nonempty(bot_response, "bot response")?;
    let prompt = render_template(
        &templates.fact_check,
        &[("evidence", evidence), ("bot_response", bot_response)],
    )?;
    Ok(judge(gateway, RailKind::FactCheck, prompt))
}

/// Samples `n_samples - 1` more answers to the prompt that produced
/// `bot_response` and asks whether the original agrees with them.
pub fn check_hallucination(
    gateway: &Gateway,
    templates: &RailTemplates,
    user_prompt: &str,
    bot_response: &str,
    cfg: &HallucinationConfig,
) -> Result<RailVerdict, RailError> {
    if cfg.n_samples < 2 {
        return Err(RailError::TooFewSamples(cfg.n_samples));
    }
    let user_prompt = nonempty(user_prompt, "prompt")?;
    let bot_response = nonempty(bot_response, "bot response")?;
    let samples = match gateway.samples(user_prompt, cfg.n_samples - 1, cfg.sample_temperature) {
        Ok(s) => s,
        Err(e) => return Ok(RailVerdict::failed(RailKind::Hallucination, &e)),
    };
    let context = samples
        .iter()
        .map(|s| s.trim().trim_end_matches('.'))
        .collect::<Vec<_>>()
        .join(". ");
    let prompt = render_template(
        &templates.hallucination,
        &[("sampled_responses", &context), ("bot_response", bot_response)],
    )?;
    let mut verdict = judge(gateway, RailKind::Hallucination, prompt);
    verdict.detail = Some(context);
    Ok(verdict)
}

/// Would `user_input` make a model break its policies? Blocks on "yes".
pub fn check_jailbreak(gateway: &Gateway, templates: &RailTemplates, user_input: &str) -> Result<RailVerdict, RailError> {
    let user_input = nonempty(user_input, "user input")?;
    let prompt = render_template(&templates.jailbreak, &[("user_input", user_input)])?;
    Ok(judge(gateway, RailKind::Jailbreak, prompt))
}

/// Is `bot_response` legal, ethical and harmless? Allows on "yes".
pub fn output_moderation(
    gateway: &Gateway,
    templates: &RailTemplates,
    bot_response: &str,
) -> Result<RailVerdict, RailError> {
    let bot_response = nonempty(bot_response, "bot response")?;
    let prompt = render_template(&templates.output_moderation, &[("bot_response", bot_response)])?;
    Ok(judge(gateway, RailKind::OutputModeration, prompt))
}
