//! Plain-text tables and JSON documents for evaluation results.

use std::fmt::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::factcheck::FactCheckMetrics;
use crate::hallucination::HallucinationMetrics;
use crate::moderation::ModerationMetrics;
use crate::topical::TopicalMetrics;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Table,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(Format::Table),
            "json" => Ok(Format::Json),
            _ => Err(format!("expected table or json, found `{s}`")),
        }
    }
}

/// One model/setting line of the topical table: an exact-match run and an
/// optional similarity-match run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TopicalRow {
    pub label: String,
    pub exact: TopicalMetrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim: Option<TopicalMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    Topical { rows: Vec<TopicalRow> },
    Moderation { rows: Vec<ModerationMetrics> },
    FactCheck { metrics: FactCheckMetrics },
    Hallucination { metrics: HallucinationMetrics },
}

pub fn render(report: &Report, format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
            s.push('\n');
            s
        }
        Format::Table => table(report),
    }
}

fn cell(value: Option<f64>) -> String {
    value.map_or_else(|| "N/A".to_string(), |v| format!("{v:.3}"))
}

fn table(report: &Report) -> String {
    let (header, rows): (Vec<String>, Vec<Vec<String>>) = match report {
        Report::Topical { rows } => {
            let t = rows
                .iter()
                .find_map(|r| r.sim.as_ref().and_then(|m| m.threshold))
                .unwrap_or(0.6);
            let header = ["Model".to_string()]
                .into_iter()
                .chain(["Us int", "Bt int", "Bt msg"].iter().flat_map(|s| [format!("{s}, no sim"), format!("{s}, sim={t}")]))
                .collect();
            let body = rows
                .iter()
                .map(|r| {
                    let sim = r.sim.as_ref();
                    vec![
                        r.label.clone(),
                        cell(Some(r.exact.user_intent_acc)),
                        cell(sim.map(|m| m.user_intent_acc)),
                        cell(Some(r.exact.bot_intent_acc)),
                        cell(sim.map(|m| m.bot_intent_acc)),
                        cell(r.exact.bot_message_acc),
                        cell(sim.and_then(|m| m.bot_message_acc)),
                    ]
                })
                .collect();
            (header, body)
        }
        Report::Moderation { rows } => (
            ["Rails", "Harmful blocked", "Helpful allowed", "N harmful", "N helpful"]
                .map(String::from)
                .to_vec(),
            rows.iter()
                .map(|m| {
                    vec![
                        m.mode.to_string(),
                        cell(Some(m.harmful_blocked_rate)),
                        cell(Some(m.helpful_allowed_rate)),
                        m.n_harmful.to_string(),
                        m.n_helpful.to_string(),
                    ]
                })
                .collect(),
        ),
        Report::FactCheck { metrics: m } => (
            ["Accuracy", "Positive acc", "Negative acc", "N", "Excluded"].map(String::from).to_vec(),
            vec![vec![
                cell(Some(m.accuracy)),
                cell(Some(m.positive_accuracy)),
                cell(Some(m.negative_accuracy)),
                m.n.to_string(),
                m.excluded.to_string(),
            ]],
        ),
        Report::Hallucination { metrics: m } => (
            ["Intercepted", "Deflected", "N", "Excluded"].map(String::from).to_vec(),
            vec![vec![
                cell(Some(m.intercepted_rate)),
                cell(Some(m.deflected_rate)),
                m.n.to_string(),
                m.excluded.to_string(),
            ]],
        ),
    };
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "| {} |", padded.join(" | "));
    };
    line(&mut out, &header);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut out, &rule);
    for row in &rows {
        line(&mut out, row);
    }
    out
}
