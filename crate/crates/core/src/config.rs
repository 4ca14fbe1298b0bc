//! Application directories: one `config.yml` plus any number of `.co` files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use railgate_colang::{parse_named, parse_script, validate, Diagnostic, ParseError, Script, REMOVE_LAST_MESSAGE};
use serde::Deserialize;
use thiserror::Error;

use crate::embedding::RetrievalConfig;
use crate::llm::{MockRule, PromptTemplate, Temperatures, DEFAULT_INSTRUCTIONS};
use crate::rails::{HallucinationConfig, RailKind, RailTemplates};
use crate::value::Value;

pub const CONFIG_FILE: &str = "config.yml";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}:{column}: {message}")]
    Yaml {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Parse(ParseError),
    #[error("{}", format_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    #[error("{path}: {message}")]
    Rule { path: PathBuf, message: String },
    #[error("{at}: rail flow `{flow}` emits `bot {form}`, which needs a `define bot` block")]
    UndefinedRailMessage { at: String, flow: String, form: String },
    #[error("unknown action `{0}` (register it or declare a stub under `actions.stubs`)")]
    UnknownAction(String),
    #[error("building indexes: {0}")]
    Embedding(#[from] crate::embedding::EmbeddingError),
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Mock,
    Http,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub engine: Engine,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Prompt template file, relative to the app directory.
    #[serde(default)]
    pub template: Option<PathBuf>,
    /// Mock rules file, relative to the app directory.
    #[serde(default)]
    pub mock_rules: Option<PathBuf>,
    /// Mock rules written inline; they are tried before the file's.
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingsConfig {
    pub engine: Engine,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// YAML map of text to vector, for the mock engine.
    #[serde(default)]
    pub overrides: Option<PathBuf>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    30
}

fn default_dim() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RailMessages {
    pub refusal: String,
    pub hallucination_warning: String,
    pub answer_unknown: String,
}

impl Default for RailMessages {
    fn default() -> Self {
        RailMessages {
            refusal: "I'm sorry, I can't respond to that.".into(),
            hallucination_warning: "Note: the answer above may contain inaccurate information.".into(),
            answer_unknown: "I'm sorry, I don't know the answer to that.".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RailsConfig {
    /// Rails run on each user message. Only `jailbreak` applies here.
    pub input: Vec<RailKind>,
    /// Rails run on each bot message, in order.
    pub output: Vec<RailKind>,
    pub hallucination: HallucinationConfig,
    pub messages: RailMessages,
    /// Template overrides, relative to the app directory.
    pub templates: BTreeMap<RailKind, PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DialogueConfig {
    /// Let the LLM choose the next step when no flow handles the intent.
    pub llm_fallback: bool,
    /// Bot intent used when the generated next step cannot be parsed.
    pub default_bot_intent: String,
    /// Sent when a turn fails.
    pub fallback_message: String,
}

impl Default for DialogueConfig {
    fn default() -> Self {
        DialogueConfig {
            llm_fallback: true,
            default_bot_intent: "general response".into(),
            fallback_message: "I'm sorry, I can't respond right now.".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnowledgeConfig {
    pub chunks: Vec<String>,
    /// Text files split into chunks at blank lines.
    pub files: Vec<PathBuf>,
    pub top_k: usize,
}

impl Default for KnowledgeConfig {
    fn default() -> Self {
        KnowledgeConfig {
            chunks: Vec::new(),
            files: Vec::new(),
            top_k: 3,
        }
    }
}

/// A canned action: the first response whose key occurs in the query
/// (case-insensitive), else `default`.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StubAction {
    pub responses: BTreeMap<String, Value>,
    pub default: Value,
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActionsConfig {
    pub stubs: BTreeMap<String, StubAction>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    instructions: Option<String>,
    #[serde(default)]
    sample_conversation: Option<String>,
    model: ModelConfig,
    embeddings: EmbeddingsConfig,
    #[serde(default)]
    retrieval: RetrievalConfig,
    #[serde(default)]
    temperatures: Temperatures,
    #[serde(default)]
    rails: RailsConfig,
    #[serde(default)]
    dialogue: DialogueConfig,
    #[serde(default)]
    knowledge_base: Option<KnowledgeConfig>,
    #[serde(default)]
    actions: ActionsConfig,
}

/// A validated application definition.
#[derive(Clone, Debug)]
pub struct RailsAppConfig {
    pub id: String,
    pub dir: PathBuf,
    /// User flows plus the injected rail flows.
    pub script: Script,
    pub instructions: String,
    pub sample_conversation: String,
    pub model: ModelConfig,
    pub embeddings: EmbeddingsConfig,
    pub retrieval: RetrievalConfig,
    pub temperatures: Temperatures,
    pub rails: RailsConfig,
    pub rail_templates: RailTemplates,
    pub prompt_template: PromptTemplate,
    pub dialogue: DialogueConfig,
    pub knowledge: Vec<String>,
    pub knowledge_top_k: usize,
    pub stubs: BTreeMap<String, StubAction>,
    /// Warnings from validating the scripts.
    pub warnings: Vec<Diagnostic>,
}

/// Default sample conversation shown to the model before the few-shot block.
pub const DEFAULT_SAMPLE_CONVERSATION: &str = "user \"Hello there!\"
  express greeting
bot express greeting
  \"Hello! How can I assist you today?\"
user \"What can you do for me?\"
  ask about capabilities
bot respond about capabilities
  \"I can answer questions about the topics I was set up for.\"";

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads `config.yml` and every `.co` file (lexicographic order) from `dir`.
pub fn load_config(dir: &Path) -> Result<RailsAppConfig, ConfigError> {
    let yaml = read(&dir.join(CONFIG_FILE))?;
    let entries = fs::read_dir(dir).map_err(|source| ConfigError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "co"))
        .collect();
    files.sort();
    let mut sources = Vec::with_capacity(files.len());
    for path in files {
        let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
        sources.push((name, read(&path)?));
    }
    parse_config(dir, &yaml, &sources)
}

/// Builds a config from already loaded sources; relative paths in the YAML
/// resolve against `dir`.
pub fn parse_config(dir: &Path, yaml: &str, colang: &[(String, String)]) -> Result<RailsAppConfig, ConfigError> {
    let config_path = dir.join(CONFIG_FILE);
    let file: ConfigFile = serde_yaml::from_str(yaml).map_err(|e| {
        let (line, column) = e.location().map(|l| (l.line(), l.column())).unwrap_or((0, 0));
        ConfigError::Yaml {
            path: config_path.clone(),
            line,
            column,
            message: e.to_string(),
        }
    })?;
    let rule = |message: String| ConfigError::Rule {
        path: config_path.clone(),
        message,
    };

    let mut scripts = Vec::with_capacity(colang.len());
    for (name, text) in colang {
        scripts.push(parse_named(text, name).map_err(ConfigError::Parse)?);
    }
    let mut script = Script::merge(scripts);
    let diags = validate(&script);
    let (errors, warnings): (Vec<_>, Vec<_>) = diags.into_iter().partition(Diagnostic::is_error);
    if !errors.is_empty() {
        return Err(ConfigError::Invalid(errors));
    }

    for rail in &file.rails.input {
        if *rail != RailKind::Jailbreak {
            return Err(rule(format!("`{rail}` cannot run as an input rail")));
        }
    }
    for rail in &file.rails.output {
        if *rail == RailKind::Jailbreak {
            return Err(rule("`jailbreak` cannot run as an output rail".into()));
        }
    }
    if file.rails.hallucination.n_samples < 2 {
        return Err(rule("rails.hallucination.n_samples must be at least 2".into()));
    }
    inject_rails(&mut script, &file.rails);

    let mut knowledge = Vec::new();
    let mut knowledge_top_k = 0;
    if let Some(kb) = &file.knowledge_base {
        knowledge.extend(kb.chunks.iter().map(|c| c.trim().to_string()).filter(|c| !c.is_empty()));
        for path in &kb.files {
            let text = read(&dir.join(path))?.replace("\r\n", "\n");
            knowledge.extend(text.split("\n\n").map(str::trim).filter(|c| !c.is_empty()).map(str::to_string));
        }
        knowledge_top_k = kb.top_k;
    }
    let retrieves_chunks = script.flows.iter().any(|f| {
        let mut found = false;
        f.visit(&mut |el| {
            if let railgate_colang::Element::ExecuteAction {
                action, result_var, ..
            } = &el.kind
            {
                found |= action == "retrieve_relevant_chunks" || result_var.as_deref() == Some("relevant_chunks");
            }
        });
        found
    });
    if file.rails.output.contains(&RailKind::FactCheck) && knowledge.is_empty() && !retrieves_chunks {
        return Err(rule(
            "the fact_check rail needs a knowledge_base or a flow that sets $relevant_chunks".into(),
        ));
    }

    for flow in script.flows.iter().filter(|f| f.is_input_rail() || f.is_output_rail()) {
        let mut missing = None;
        flow.visit(&mut |el| {
            if let railgate_colang::Element::BotEmit(railgate_colang::Form::Named(form)) = &el.kind {
                if form != REMOVE_LAST_MESSAGE && script.bot_def(form).is_none() && missing.is_none() {
                    missing = Some(form.clone());
                }
            }
        });
        if let Some(form) = missing {
            return Err(ConfigError::UndefinedRailMessage {
                at: flow.span.to_string(),
                flow: flow.name.clone(),
                form,
            });
        }
    }

    let mut rail_templates = RailTemplates::default();
    for (rail, path) in &file.rails.templates {
        rail_templates.set(*rail, read(&dir.join(path))?);
    }
    rail_templates
        .check()
        .map_err(|(rail, e)| rule(format!("{rail} template: {e}")))?;

    let prompt_template = match &file.model.template {
        Some(path) => PromptTemplate::load(&dir.join(path)).map_err(rule)?,
        None => PromptTemplate::default(),
    };

    match file.model.engine {
        Engine::Http if file.model.endpoint.is_none() || file.model.model.is_none() => {
            return Err(rule("an http model needs `endpoint` and `model`".into()))
        }
        _ => {}
    }
    match file.embeddings.engine {
        Engine::Http if file.embeddings.endpoint.is_none() || file.embeddings.model.is_none() => {
            return Err(rule("http embeddings need `endpoint` and `model`".into()))
        }
        _ => {}
    }
    if file.embeddings.dim == 0 {
        return Err(rule("embeddings.dim must be positive".into()));
    }
    if file.retrieval.k_examples == 0 {
        return Err(rule("retrieval.k_examples must be positive".into()));
    }
    if let Some(t) = file.retrieval.similarity_threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(rule(format!("retrieval.similarity_threshold {t} is outside [0, 1]")));
        }
    }
    for (i, r) in file.model.rules.iter().enumerate() {
        r.validate(i).map_err(rule)?;
    }

    let id = file.id.unwrap_or_else(|| {
        dir.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "app".into())
    });
    Ok(RailsAppConfig {
        id,
        dir: dir.to_path_buf(),
        script,
        instructions: file.instructions.unwrap_or_else(|| DEFAULT_INSTRUCTIONS.to_string()),
        sample_conversation: file
            .sample_conversation
            .unwrap_or_else(|| DEFAULT_SAMPLE_CONVERSATION.to_string()),
        model: file.model,
        embeddings: file.embeddings,
        retrieval: file.retrieval,
        temperatures: file.temperatures,
        rails: file.rails,
        rail_templates,
        prompt_template,
        dialogue: file.dialogue,
        knowledge,
        knowledge_top_k,
        stubs: file.actions.stubs,
        warnings,
    })
}

pub const CHECK_JAILBREAK_FLOW: &str = "define flow check jailbreak
  user ...
  $allowed = execute check_jailbreak
  if not $allowed
    bot inform cannot answer
    stop
";

pub const OUTPUT_MODERATION_FLOW: &str = "define flow check bot response
  bot ...
  $allowed = execute output_moderation
  if not $allowed
    bot remove last message
    bot inform cannot answer
    stop
";

pub const HALLUCINATION_FLOW: &str = "define flow check hallucination
  bot ...
  $consistent = execute check_hallucination
  if not $consistent
    bot inform answer prone to hallucination
";

pub const FACT_CHECK_FLOW: &str = "define flow check facts
  bot ...
  $accurate = execute check_facts
  if not $accurate
    bot remove last message
    bot inform answer unknown
";

pub fn rail_flow(rail: RailKind) -> &'static str {
    match rail {
        RailKind::Jailbreak => CHECK_JAILBREAK_FLOW,
        RailKind::OutputModeration => OUTPUT_MODERATION_FLOW,
        RailKind::Hallucination => HALLUCINATION_FLOW,
        RailKind::FactCheck => FACT_CHECK_FLOW,
    }
}

/// Adds the flow of each enabled rail unless a flow with that name exists,
/// plus definitions for the messages those flows use.
pub fn inject_rails(script: &mut Script, rails: &RailsConfig) {
    let messages = [
        ("inform cannot answer", &rails.messages.refusal),
        ("inform answer prone to hallucination", &rails.messages.hallucination_warning),
        ("inform answer unknown", &rails.messages.answer_unknown),
    ];
    let mut needed = Vec::new();
    for rail in rails.input.iter().chain(&rails.output) {
        let injected = parse_script(rail_flow(*rail)).expect("built-in rail flow parses");
        for flow in injected.flows {
            if script.flow(&flow.name).is_some() {
                continue;
            }
            flow.visit(&mut |el| {
                if let railgate_colang::Element::BotEmit(railgate_colang::Form::Named(f)) = &el.kind {
                    needed.push(f.clone());
                }
            });
            script.flows.push(flow);
        }
    }
    for (form, text) in messages {
        if needed.iter().any(|f| f == form) && script.bot_def(form).is_none() {
            let def = format!("define bot {form}\n  {}\n", railgate_colang::quote(text));
            let parsed = parse_script(&def).expect("generated bot definition parses");
            script.bot_defs.extend(parsed.bot_defs);
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Mock => "mock",
            Engine::Http => "http",
        })
    }
}
