mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use common::*;
use railgate_core::llm::{FnLlm, LlmError, LlmTask, ProviderError, TaskKind};
use railgate_eval::dataset::{default_questions, read_jsonl};
use railgate_eval::moderation::split_prompts;
use railgate_eval::{
    eval_factcheck, eval_hallucination, eval_moderation, FactLabel, FactRecord, HallucinationOptions, ModerationMode,
    PromptRecord, QuestionRecord,
};

/// The dialogue echoes the user; the input judge flags `[A]`, the output
/// judge flags `[B]`.
fn moderation_llm() -> Arc<FnLlm<impl Fn(&LlmTask) -> Result<String, LlmError> + Send + Sync>> {
    Arc::new(FnLlm::new(|task: &LlmTask| match task.kind {
        TaskKind::GenerateUserIntent => Ok("ask question".into()),
        TaskKind::GenerateNextStep => Ok("bot answer question".into()),
        TaskKind::GenerateBotMessage => Ok(format!("You said: {}", last_user(&task.prompt).unwrap_or_default())),
        TaskKind::RailJudgment if task.prompt.contains(JAILBREAK_Q) => {
            Ok(if task.prompt.contains("[A]") { "Yes" } else { "No" }.into())
        }
        TaskKind::RailJudgment if task.prompt.contains(MODERATION_Q) => {
            Ok(if task.prompt.contains("[B]") { "No" } else { "Yes" }.into())
        }
        _ => unexpected(task),
    }))
}

fn prompts(n: usize, tag: &str) -> Vec<String> {
    (0..n).map(|i| format!("request number {i} {tag}")).collect()
}

#[test]
fn separable_prompts_are_all_sorted_correctly() {
    let env = env_with(None, moderation_llm(), hashing(64), 64);
    let harmful = prompts(10, "[A]");
    let helpful = prompts(10, "");
    let run = eval_moderation(&env, &harmful, &helpful, ModerationMode::Input).unwrap();
    assert_eq!(run.metrics.harmful_blocked_rate, 1.0);
    assert_eq!(run.metrics.helpful_allowed_rate, 1.0);
    assert_eq!(run.metrics.blocked_by_input, 10);
    assert_eq!(run.records.len(), 20);
}

#[test]
fn both_rails_block_the_union() {
    let env = env_with(None, moderation_llm(), hashing(64), 64);
    // 100 harmful: 40 caught by input only, 30 by output only, 10 by both, 20 by neither
    let mut harmful = prompts(40, "[A]");
    harmful.extend(prompts(30, "[B]"));
    harmful.extend(prompts(10, "[A] [B]"));
    harmful.extend(prompts(20, "sneaky"));
    let helpful = prompts(100, "fine");
    let rate = |mode| eval_moderation(&env, &harmful, &helpful, mode).unwrap().metrics;
    let input = rate(ModerationMode::Input);
    let output = rate(ModerationMode::Output);
    let both = rate(ModerationMode::Both);
    assert_eq!(input.harmful_blocked_rate, 50.0 / 100.0);
    assert_eq!(output.harmful_blocked_rate, 40.0 / 100.0);
    assert_eq!(both.harmful_blocked_rate, 80.0 / 100.0);
    assert!(both.harmful_blocked_rate > input.harmful_blocked_rate);
    assert!(both.harmful_blocked_rate > output.harmful_blocked_rate);
    for m in [&input, &output, &both] {
        assert_eq!(m.helpful_allowed_rate, 1.0);
        assert_eq!((m.n_harmful, m.n_helpful), (100, 100));
    }
    // an input-blocked prompt never reaches the output rail
    assert_eq!(both.blocked_by_input, 50);
    assert_eq!(both.blocked_by_output, 30);
}

#[test]
fn failed_turns_count_as_blocked() {
    let llm = Arc::new(FnLlm::new(|task: &LlmTask| match task.kind {
        TaskKind::RailJudgment => Ok("No".into()),
        _ => Err(LlmError::Provider(ProviderError::fatal("down"))),
    }));
    let env = env_with(None, llm, hashing(64), 64);
    let run = eval_moderation(&env, &prompts(2, "x"), &prompts(2, "y"), ModerationMode::Input).unwrap();
    assert_eq!(run.metrics.harmful_blocked_rate, 1.0);
    assert_eq!(run.metrics.helpful_allowed_rate, 0.0);
    assert_eq!(run.metrics.errors, 4);
}

#[test]
fn labelled_prompt_files_split_by_label() {
    let rows: Vec<PromptRecord> =
        read_jsonl("{\"prompt\":\"a\",\"harmful\":true}\n{\"prompt\":\"b\",\"harmful\":false}\n".as_bytes()).unwrap();
    let (harmful, helpful) = split_prompts(&rows);
    assert_eq!((harmful, helpful), (vec!["a".to_string()], vec!["b".to_string()]));
}

fn triples() -> Vec<FactRecord> {
    (0..10)
        .map(|i| FactRecord {
            context: format!("The museum opened in {}.", 1900 + i),
            question: "When did the museum open?".into(),
            answer: if i % 2 == 0 {
                format!("It opened in {}.", 1900 + i)
            } else {
                "It opened in 2024. [neg]".into()
            },
            label: if i % 2 == 0 { FactLabel::Positive } else { FactLabel::Negative },
        })
        .collect()
}

#[test]
fn fact_check_oracle_and_yes_man() {
    let oracle = Arc::new(FnLlm::new(|task: &LlmTask| {
        assert!(task.prompt.contains(FACT_Q));
        Ok(if task.prompt.contains("[neg]") { "no" } else { "yes" }.into())
    }));
    let env = env_with(None, oracle, hashing(64), 64);
    let m = eval_factcheck(&env, &triples()).unwrap().metrics;
    assert_eq!((m.accuracy, m.positive_accuracy, m.negative_accuracy), (1.0, 1.0, 1.0));

    let yes = Arc::new(FnLlm::new(|_: &LlmTask| Ok("yes".to_string())));
    let env = env_with(None, yes, hashing(64), 64);
    let m = eval_factcheck(&env, &triples()).unwrap().metrics;
    assert_eq!(m.accuracy, 0.5);
    assert_eq!((m.true_positive, m.false_positive, m.true_negative, m.false_negative), (5, 5, 0, 0));
}

#[test]
fn fact_check_failures_are_excluded() {
    let calls = AtomicUsize::new(0);
    let flaky = Arc::new(FnLlm::new(move |_: &LlmTask| {
        if calls.fetch_add(1, Ordering::SeqCst).is_multiple_of(5) {
            Err(LlmError::Provider(ProviderError::fatal("timeout")))
        } else {
            Ok("yes".into())
        }
    }));
    let env = env_with(None, flaky, hashing(64), 64);
    let run = eval_factcheck(&env, &triples()).unwrap();
    assert_eq!(run.metrics.excluded, 2);
    assert_eq!(run.metrics.n, 10);
    let judged = run.metrics.true_positive + run.metrics.false_positive;
    assert_eq!(judged, 8);
    assert!(run.records.iter().filter(|r| r.error.is_some()).all(|r| r.predicted.is_none()));
}

#[test]
fn consistent_answers_are_not_intercepted() {
    let llm = Arc::new(FnLlm::new(|task: &LlmTask| match task.kind {
        TaskKind::RailJudgment => Ok("yes".into()),
        _ => Ok("It was in 1921.".into()),
    }));
    let env = env_with(None, llm, hashing(64), 64);
    let run = eval_hallucination(&env, &default_questions(), &HallucinationOptions::default()).unwrap();
    assert_eq!(run.metrics.n, 20);
    assert_eq!(run.metrics.checked, 20);
    assert_eq!(run.metrics.intercepted_rate, 0.0);
    assert_eq!(run.metrics.deflected_rate, 0.0);
}

#[test]
fn divergent_answers_are_all_intercepted() {
    let n = AtomicUsize::new(0);
    let llm = Arc::new(FnLlm::new(move |task: &LlmTask| match task.kind {
        TaskKind::RailJudgment => {
            assert!(task.prompt.contains(HALLUCINATION_Q));
            Ok("no".into())
        }
        _ => Ok(format!("Answer number {}.", n.fetch_add(1, Ordering::SeqCst))),
    }));
    let env = env_with(None, llm, hashing(64), 64);
    let run = eval_hallucination(&env, &default_questions(), &HallucinationOptions::default()).unwrap();
    assert_eq!(run.metrics.intercepted_rate, 1.0);
    assert_eq!(run.metrics.flagged, 20);
}

#[test]
fn deflections_skip_the_check() {
    let judged = Arc::new(AtomicUsize::new(0));
    let seen = judged.clone();
    let llm = Arc::new(FnLlm::new(move |task: &LlmTask| match task.kind {
        TaskKind::RailJudgment => {
            seen.fetch_add(1, Ordering::SeqCst);
            Ok("no".into())
        }
        _ if task.prompt.contains("Atlantis") => Ok("About 4,000 people.".into()),
        _ => Ok("I'm sorry, I don't know of any such event.".into()),
    }));
    let env = env_with(None, llm, hashing(64), 64);
    let run = eval_hallucination(&env, &default_questions(), &HallucinationOptions::default()).unwrap();
    assert_eq!(run.metrics.deflected, 19);
    assert_eq!(run.metrics.deflected_rate, 19.0 / 20.0);
    assert_eq!((run.metrics.checked, run.metrics.flagged), (1, 1));
    assert_eq!(judged.load(Ordering::SeqCst), 1);
    let custom = HallucinationOptions {
        markers: vec!["4,000".into()],
    };
    let run = eval_hallucination(&env, &[QuestionRecord { question: "Atlantis?".into() }], &custom).unwrap();
    assert_eq!(run.metrics.deflected, 1);
}
