//! Evaluation harness for guardrail apps: topical rail accuracy at the
//! user intent, bot intent and bot message stages, and block/allow metrics
//! for the moderation, fact-checking and hallucination rails.

pub mod builder;
pub mod dataset;
pub mod factcheck;
pub mod hallucination;
pub mod moderation;
pub mod report;
pub mod topical;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use railgate_colang::Script;
use railgate_core::config::inject_rails;
use railgate_core::embedding::{EmbeddingProvider, RetrievalConfig};
use railgate_core::llm::{Gateway, LlmProvider};
use railgate_core::rails::RailKind;
use railgate_core::{embedder_from_config, llm_from_config, load_config, runtime_for, ConfigError, RailsApp, RailsAppConfig, Runtime};
use thiserror::Error;

pub use builder::{bot_form_for, canonical_form, topical_script};
pub use dataset::{balance_dataset, FactLabel, FactRecord, IntentDataset, IntentRecord, PromptRecord, QuestionRecord};
pub use factcheck::{eval_factcheck, FactCheckMetrics, FactCheckRun};
pub use hallucination::{eval_hallucination, HallucinationMetrics, HallucinationOptions, HallucinationRun};
pub use moderation::{eval_moderation, ModerationMetrics, ModerationMode, ModerationRun};
pub use report::{render, Format, Report, TopicalRow};
pub use topical::{eval_topical, KShots, TopicalMetrics, TopicalOptions, TopicalRun};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Runtime(#[from] railgate_core::RuntimeError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("dataset line {line}: {message}")]
    Dataset { line: usize, message: String },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("generated script is invalid: {0}")]
    Script(String),
    #[error("intents without a defined canonical form and flow: {}", .0.join(", "))]
    IntentsMismatch(Vec<String>),
    #[error("record {index}: `{utterance}` was retrieved as its own few-shot example")]
    HoldOut { index: usize, utterance: String },
}

/// Base configuration and providers shared by every evaluation. The base
/// supplies model, embeddings, prompts, templates and rail messages; each
/// evaluation swaps in its own script and rails.
#[derive(Clone)]
pub struct EvalEnv {
    pub base: RailsAppConfig,
    pub llm: Arc<dyn LlmProvider>,
    pub embedder: Arc<dyn EmbeddingProvider>,
}

impl std::fmt::Debug for EvalEnv {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EvalEnv").field("base", &self.base.id).finish_non_exhaustive()
    }
}

impl EvalEnv {
    pub fn new(base: RailsAppConfig, llm: Arc<dyn LlmProvider>, embedder: Arc<dyn EmbeddingProvider>) -> Self {
        EvalEnv { base, llm, embedder }
    }

    /// Loads the app in `dir` and the providers its config names.
    pub fn load(dir: &Path) -> Result<Self, EvalError> {
        let base = load_config(dir)?;
        let llm = llm_from_config(&base)?;
        let embedder = embedder_from_config(&base)?;
        Ok(EvalEnv { base, llm, embedder })
    }

    pub fn gateway(&self) -> Gateway {
        Gateway::new(self.llm.clone(), self.base.temperatures.clone())
    }

    /// A runtime over `script` with the given rails injected.
    pub fn runtime(
        &self,
        script: Script,
        input: &[RailKind],
        output: &[RailKind],
        retrieval: RetrievalConfig,
    ) -> Result<Runtime, EvalError> {
        let mut config = self.base.clone();
        config.script = script;
        config.rails.input = input.to_vec();
        config.rails.output = output.to_vec();
        config.retrieval = retrieval;
        config.knowledge.clear();
        inject_rails(&mut config.script, &config.rails);
        let errors: Vec<String> = railgate_colang::validate(&config.script)
            .into_iter()
            .filter(|d| d.is_error())
            .map(|d| d.to_string())
            .collect();
        if !errors.is_empty() {
            return Err(EvalError::Script(errors.join("; ")));
        }
        let app = RailsApp::with_providers(config, self.llm.clone(), self.embedder.clone())?;
        Ok(runtime_for(app)?)
    }
}

/// `correct / total`, or 0 for an empty denominator.
pub(crate) fn ratio(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}
