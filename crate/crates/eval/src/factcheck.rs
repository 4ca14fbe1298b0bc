//! Fact-checking rail accuracy on labelled (context, question, answer)
//! triples.

use std::io::Write;

use railgate_core::rails::check_facts;
use serde::Serialize;

use crate::dataset::{FactLabel, FactRecord};
use crate::topical::write_records;
use crate::{ratio, EvalEnv, EvalError};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FactCheckMetrics {
    /// Over the records that received a judgment.
    pub accuracy: f64,
    pub positive_accuracy: f64,
    pub negative_accuracy: f64,
    pub n: usize,
    pub true_positive: usize,
    pub false_negative: usize,
    pub true_negative: usize,
    pub false_positive: usize,
    /// Records left out because no judgment could be obtained.
    pub excluded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FactCheckRecord {
    pub index: usize,
    pub question: String,
    pub answer: String,
    pub label: FactLabel,
    pub predicted: Option<FactLabel>,
    pub raw_judgment: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactCheckRun {
    pub metrics: FactCheckMetrics,
    pub records: Vec<FactCheckRecord>,
}

impl FactCheckRun {
    pub fn write_jsonl<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write_records(w, &self.records)
    }
}

/// Judges each answer against its context; "supported" predicts positive.
pub fn eval_factcheck(env: &EvalEnv, triples: &[FactRecord]) -> Result<FactCheckRun, EvalError> {
    if triples.is_empty() {
        return Err(EvalError::Empty("fact-check set"));
    }
    let gateway = env.gateway();
    let templates = &env.base.rail_templates;
    let mut records = Vec::with_capacity(triples.len());
    for (index, t) in triples.iter().enumerate() {
        let (predicted, raw_judgment, error) = match check_facts(&gateway, templates, &t.context, &t.answer) {
            Ok(v) if v.error.is_none() => {
                let label = if v.allowed { FactLabel::Positive } else { FactLabel::Negative };
                (Some(label), v.raw_judgment, None)
            }
            Ok(v) => (None, v.raw_judgment, v.error),
            Err(e) => (None, String::new(), Some(e.to_string())),
        };
        if let Some(e) = &error {
            tracing::warn!(index, error = %e, "fact-check record excluded");
        }
        records.push(FactCheckRecord {
            index,
            question: t.question.clone(),
            answer: t.answer.clone(),
            label: t.label,
            predicted,
            raw_judgment,
            error,
        });
    }
    let count = |label: FactLabel, predicted: FactLabel| {
        records
            .iter()
            .filter(|r| r.label == label && r.predicted == Some(predicted))
            .count()
    };
    let tp = count(FactLabel::Positive, FactLabel::Positive);
    let fneg = count(FactLabel::Positive, FactLabel::Negative);
    let tn = count(FactLabel::Negative, FactLabel::Negative);
    let fp = count(FactLabel::Negative, FactLabel::Positive);
    let judged = tp + fneg + tn + fp;
    let metrics = FactCheckMetrics {
        accuracy: ratio(tp + tn, judged),
        positive_accuracy: ratio(tp, tp + fneg),
        negative_accuracy: ratio(tn, tn + fp),
        n: records.len(),
        true_positive: tp,
        false_negative: fneg,
        true_negative: tn,
        false_positive: fp,
        excluded: records.len() - judged,
    };
    Ok(FactCheckRun { metrics, records })
}
