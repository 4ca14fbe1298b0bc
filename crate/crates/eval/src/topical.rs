//! Topical rail accuracy: each record runs as a fresh one-turn session with
//! its own utterance withheld from few-shot retrieval.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use railgate_core::embedding::RetrievalConfig;
use railgate_core::{Event, TurnOptions};
use serde::{Serialize, Serializer};

use crate::builder::{canonical_form, flow_responses};
use crate::dataset::IntentDataset;
use crate::{ratio, EvalEnv, EvalError};

/// Number of few-shot examples per prompt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KShots {
    All,
    N(usize),
}

impl KShots {
    pub fn get(self) -> usize {
        match self {
            KShots::All => usize::MAX,
            KShots::N(n) => n,
        }
    }
}

impl fmt::Display for KShots {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KShots::All => f.write_str("all"),
            KShots::N(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for KShots {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(KShots::All);
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(KShots::N(n)),
            _ => Err(format!("expected a positive integer or `all`, found `{s}`")),
        }
    }
}

impl Serialize for KShots {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            KShots::All => s.serialize_str("all"),
            KShots::N(n) => s.serialize_u64(*n as u64),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopicalOptions {
    pub k: KShots,
    /// `None` scores user intents by exact match only.
    pub threshold: Option<f64>,
    /// Recorded with the metrics; balancing happens before evaluation.
    pub seed: u64,
}

impl Default for TopicalOptions {
    fn default() -> Self {
        TopicalOptions {
            k: KShots::N(3),
            threshold: None,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopicalMetrics {
    pub user_intent_acc: f64,
    pub bot_intent_acc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bot_message_acc: Option<f64>,
    pub n_samples: usize,
    pub n_intents: usize,
    pub user_intent_correct: usize,
    pub bot_intent_correct: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bot_message_correct: Option<usize>,
    /// Records with a gold bot message.
    pub bot_message_total: usize,
    pub k: KShots,
    pub threshold: Option<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopicalRecord {
    pub index: usize,
    pub utterance: String,
    pub gold_intent: String,
    pub predicted_intent: String,
    pub matched: bool,
    pub user_intent_correct: bool,
    pub gold_bot_intent: String,
    pub predicted_bot_intent: Option<String>,
    pub bot_intent_correct: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold_bot_message: Option<String>,
    pub predicted_bot_message: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bot_message_correct: Option<bool>,
    pub examples: Vec<String>,
    pub llm_calls: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TopicalRun {
    pub metrics: TopicalMetrics,
    pub records: Vec<TopicalRecord>,
}

impl TopicalRun {
    pub fn write_jsonl<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write_records(w, &self.records)
    }
}

pub(crate) fn write_records<W: Write, T: Serialize>(w: &mut W, records: &[T]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Scores the three pipeline stages on `dataset`. The base script must
/// define the canonical form of every intent and a flow answering it;
/// [`crate::topical_script`] generates one.
pub fn eval_topical(env: &EvalEnv, dataset: &IntentDataset, opts: &TopicalOptions) -> Result<TopicalRun, EvalError> {
    if dataset.is_empty() {
        return Err(EvalError::Empty("intent dataset"));
    }
    let mut script = env.base.script.clone();
    script.flows.retain(|f| !f.is_input_rail() && !f.is_output_rail());
    let responses = flow_responses(&script);
    let missing: Vec<String> = dataset
        .intents()
        .into_iter()
        .filter(|i| {
            let form = canonical_form(i);
            script.user_def(&form).is_none() || !responses.contains_key(&form)
        })
        .map(str::to_string)
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::IntentsMismatch(missing));
    }
    let retrieval = RetrievalConfig {
        k_examples: opts.k.get(),
        similarity_threshold: opts.threshold,
        ..env.base.retrieval.clone()
    };
    let rt = env.runtime(script, &[], &[], retrieval)?;

    let mut records = Vec::with_capacity(dataset.len());
    for (index, r) in dataset.records.iter().enumerate() {
        let gold_form = canonical_form(&r.intent);
        let gold_bot_intent = responses[&gold_form].clone();
        let gold_bot_message = dataset.bot_messages.get(&r.intent).cloned();
        let mut state = rt.new_session();
        let out = rt.run_turn_with_options(
            &mut state,
            &r.utterance,
            TurnOptions {
                held_out: Some(r.utterance.clone()),
            },
        )?;
        let intent = out.trace.user_intent.clone().unwrap_or_else(|| railgate_core::runtime::IntentTrace {
            form: String::new(),
            matched: false,
            examples: Vec::new(),
        });
        if intent.examples.contains(&r.utterance) {
            return Err(EvalError::HoldOut {
                index,
                utterance: r.utterance.clone(),
            });
        }
        let predicted_bot_intent = out.trace.events.iter().find_map(|e| match &e.event {
            Event::BotIntent { form } => Some(form.clone()),
            _ => None,
        });
        let predicted_bot_message = out.messages.first().cloned();
        let bot_message_correct = gold_bot_message
            .as_ref()
            .map(|gold| predicted_bot_message.as_ref() == Some(gold));
        records.push(TopicalRecord {
            index,
            utterance: r.utterance.clone(),
            gold_intent: gold_form.clone(),
            user_intent_correct: intent.matched && intent.form == gold_form,
            predicted_intent: intent.form,
            matched: intent.matched,
            bot_intent_correct: predicted_bot_intent.as_ref() == Some(&gold_bot_intent),
            gold_bot_intent,
            predicted_bot_intent,
            gold_bot_message,
            predicted_bot_message,
            bot_message_correct,
            examples: intent.examples,
            llm_calls: out.trace.llm_calls.len(),
            error: out.trace.error,
        });
    }

    let n = records.len();
    let user_ok = records.iter().filter(|r| r.user_intent_correct).count();
    let bot_ok = records.iter().filter(|r| r.bot_intent_correct).count();
    let msg_total = records.iter().filter(|r| r.bot_message_correct.is_some()).count();
    let msg_ok = records.iter().filter(|r| r.bot_message_correct == Some(true)).count();
    let metrics = TopicalMetrics {
        user_intent_acc: ratio(user_ok, n),
        bot_intent_acc: ratio(bot_ok, n),
        bot_message_acc: (msg_total > 0).then(|| ratio(msg_ok, msg_total)),
        n_samples: n,
        n_intents: dataset.intents().len(),
        user_intent_correct: user_ok,
        bot_intent_correct: bot_ok,
        bot_message_correct: (msg_total > 0).then_some(msg_ok),
        bot_message_total: msg_total,
        k: opts.k,
        threshold: opts.threshold,
        seed: opts.seed,
    };
    Ok(TopicalRun { metrics, records })
}
