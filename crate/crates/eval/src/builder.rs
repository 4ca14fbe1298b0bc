//! Generates a topical app from an intent dataset: one user form per intent
//! with its utterances as examples, one bot form answering it, and a flow
//! joining the two.

use std::collections::BTreeMap;

use railgate_colang::{parse_named, quote, Element, Form, Script};

use crate::dataset::IntentDataset;
use crate::EvalError;

/// `card_arrival` becomes `card arrival`: lowercase words of letters and
/// digits.
pub fn canonical_form(intent: &str) -> String {
    intent
        .to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn bot_form_for(intent: &str) -> String {
    format!("respond to {}", canonical_form(intent))
}

fn flow_name(intent: &str) -> String {
    canonical_form(intent).replace(' ', "_")
}

/// Bot messages are the dataset's gold messages when present, otherwise a
/// placeholder naming the intent.
pub fn topical_script(dataset: &IntentDataset) -> Result<Script, EvalError> {
    let mut by_form: BTreeMap<String, &str> = BTreeMap::new();
    let mut src = String::new();
    for intent in dataset.intents() {
        let form = canonical_form(intent);
        if form.is_empty() {
            return Err(EvalError::Script(format!("intent `{intent}` has no usable characters")));
        }
        if let Some(prev) = by_form.insert(form.clone(), intent) {
            return Err(EvalError::Script(format!(
                "intents `{prev}` and `{intent}` map to the same form `{form}`"
            )));
        }
        src.push_str(&format!("define user {form}\n"));
        let mut seen = Vec::new();
        for r in dataset.records.iter().filter(|r| r.intent == intent) {
            if !seen.contains(&&r.utterance) {
                seen.push(&r.utterance);
                src.push_str(&format!("  {}\n", quote(&r.utterance)));
            }
        }
        let bot = bot_form_for(intent);
        let message = dataset
            .bot_messages
            .get(intent)
            .cloned()
            .unwrap_or_else(|| format!("[{intent}]"));
        src.push_str(&format!("\ndefine bot {bot}\n  {}\n\n", quote(&message)));
        src.push_str(&format!("define flow {}\n  user {form}\n  bot {bot}\n\n", flow_name(intent)));
    }
    parse_named(&src, "topical.co").map_err(|e| EvalError::Script(e.to_string()))
}

/// The bot form each flow answers its opening user form with.
pub(crate) fn flow_responses(script: &Script) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for flow in &script.flows {
        if let [first, second, ..] = flow.elements.as_slice() {
            if let (Element::UserMatch(Form::Named(user)), Element::BotEmit(Form::Named(bot))) =
                (&first.kind, &second.kind)
            {
                out.entry(user.clone()).or_insert_with(|| bot.clone());
            }
        }
    }
    out
}
