//! `railgate chat|serve|eval|lint`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, IsTerminal, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use railgate_core::runtime::{read_jsonl, write_jsonl};
use railgate_core::{load_app, ConfigError, Event, RuntimeError, SequencedEvent};
use railgate_eval::dataset::{default_questions, read_jsonl_path};
use railgate_eval::moderation::split_prompts;
use railgate_eval::{
    balance_dataset, canonical_form, eval_factcheck, eval_hallucination, eval_moderation, eval_topical, render,
    topical_script, EvalEnv, EvalError, FactRecord, Format, HallucinationOptions, IntentDataset, KShots,
    ModerationMode, PromptRecord, QuestionRecord, Report, TopicalOptions, TopicalRow,
};
use thiserror::Error;

use crate::{AppRegistry, AppState, ServerError, SessionStore};

#[derive(Debug, Parser)]
#[command(name = "railgate", version, about = "Run and evaluate guardrail apps")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Chat with an app on the terminal, or replay a saved session.
    Chat(ChatArgs),
    /// Serve the chat API for one app or a folder of apps.
    Serve(ServeArgs),
    /// Evaluate an app's rails on a dataset.
    Eval(EvalArgs),
    /// Load an app and report problems in its configuration.
    Lint(LintArgs),
}

#[derive(Debug, Args)]
pub struct ChatArgs {
    /// App directory.
    #[arg(long)]
    pub config: PathBuf,
    /// Print each turn's trace as JSON.
    #[arg(long)]
    pub trace: bool,
    /// Rebuild a session from an event log instead of reading stdin.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Write the session's event log here when the chat ends.
    #[arg(long)]
    pub save: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// App directory, or a folder of app directories.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long, default_value_t = 8000)]
    pub port: u16,
    /// Seconds a session may stay idle.
    #[arg(long, default_value_t = 1800)]
    pub session_ttl: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalKind {
    Topical,
    Moderation,
    Factcheck,
    Hallucination,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(value_enum)]
    pub kind: EvalKind,
    /// App directory providing the model, embeddings and prompts.
    #[arg(long)]
    pub config: PathBuf,
    /// Dataset: intent CSV for topical, JSONL otherwise.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Few-shot examples per prompt, or `all`.
    #[arg(long, default_value = "3")]
    pub k: KShots,
    /// Also score with similarity matching at this threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Records kept per intent when balancing a topical dataset.
    #[arg(long, default_value_t = 3)]
    pub max_per_intent: usize,
    /// Moderation rails to use; all three modes when omitted.
    #[arg(long)]
    pub mode: Option<ModerationMode>,
    /// Deflection markers for the hallucination eval; replaces the defaults.
    #[arg(long = "marker")]
    pub markers: Vec<String>,
    #[arg(long, default_value = "table")]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-record results as JSONL.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LintArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Server(#[from] ServerError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn stdout_err(source: std::io::Error) -> CliError {
    CliError::Io {
        path: PathBuf::from("<stdout>"),
        source,
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    match cli.command {
        Command::Chat(args) => {
            let interactive = stdin.is_terminal();
            chat(&args, stdin.lock(), &mut stdout.lock(), interactive)
        }
        Command::Serve(args) => serve(&args),
        Command::Eval(args) => eval(&args, &mut stdout.lock()),
        Command::Lint(args) => lint(&args, &mut stdout.lock()),
    }
}

/// `user: ...` and `bot: ...` lines for the utterances in `history`.
pub fn transcript(history: &[SequencedEvent]) -> String {
    let mut out = String::new();
    for e in history {
        match &e.event {
            Event::UtteranceUserActionFinished { text } => {
                out.push_str(&format!("user: {text}\n"));
            }
            Event::StartUtteranceBotAction { text } => out.push_str(&format!("bot: {text}\n")),
            _ => {}
        }
    }
    out
}

pub fn chat<R: BufRead, W: Write>(args: &ChatArgs, input: R, out: &mut W, interactive: bool) -> Result<(), CliError> {
    let rt = load_app(&args.config)?;
    let state = if let Some(path) = &args.replay {
        let file = File::open(path).map_err(io_err(path))?;
        let events = read_jsonl(BufReader::new(file)).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let state = rt.replay(&events)?;
        out.write_all(transcript(&state.history).as_bytes()).map_err(stdout_err)?;
        state
    } else {
        let mut state = rt.new_session();
        let mut lines = input.lines();
        loop {
            if interactive {
                write!(out, "> ").and_then(|_| out.flush()).map_err(stdout_err)?;
            }
            let Some(line) = lines.next() else { break };
            let line = line.map_err(io_err(Path::new("<stdin>")))?;
            let text = line.trim();
            if text.is_empty() {
                continue;
            }
            let outcome = rt.run_turn(&mut state, text)?;
            for m in &outcome.messages {
                writeln!(out, "bot: {m}").map_err(stdout_err)?;
            }
            if args.trace {
                let json = serde_json::to_string(&outcome.trace).expect("traces serialize");
                writeln!(out, "{json}").map_err(stdout_err)?;
            }
        }
        state
    };
    if let Some(path) = &args.save {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = BufWriter::new(file);
        write_jsonl(&mut w, &state.history)
            .and_then(|_| w.flush())
            .map_err(io_err(path))?;
    }
    Ok(())
}

fn serve(args: &ServeArgs) -> Result<(), CliError> {
    let apps = AppRegistry::discover(&args.config)?;
    let state = Arc::new(AppState::new(apps, SessionStore::new(Duration::from_secs(args.session_ttl))));
    let addr = SocketAddr::new(args.host, args.port);
    let runtime = tokio::runtime::Runtime::new().map_err(|source| CliError::Io {
        path: PathBuf::from("<tokio>"),
        source,
    })?;
    runtime.block_on(crate::serve(state, addr))?;
    Ok(())
}

fn require_data(args: &EvalArgs) -> Result<&Path, CliError> {
    args.data
        .as_deref()
        .ok_or_else(|| CliError::Usage(format!("`eval {:?}` needs --data", args.kind).to_lowercase()))
}

fn write_log<F>(path: Option<&Path>, write: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let Some(path) = path else { return Ok(()) };
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn model_label(env: &EvalEnv) -> String {
    let m = &env.base.model;
    m.model.clone().unwrap_or_else(|| m.engine.to_string())
}

fn covers(env: &EvalEnv, data: &IntentDataset) -> bool {
    data.intents()
        .iter()
        .all(|i| env.base.script.user_def(&canonical_form(i)).is_some())
}

pub fn eval<W: Write>(args: &EvalArgs, out: &mut W) -> Result<(), CliError> {
    let mut env = EvalEnv::load(&args.config)?;
    let log = args.log.as_deref();
    let report = match args.kind {
        EvalKind::Topical => {
            let data = IntentDataset::from_csv_path(require_data(args)?)?;
            let data = balance_dataset(&data, args.max_per_intent.max(1), args.seed);
            if !covers(&env, &data) {
                env.base.script = topical_script(&data)?;
            }
            let opts = TopicalOptions {
                k: args.k,
                threshold: None,
                seed: args.seed,
            };
            let exact = eval_topical(&env, &data, &opts)?;
            let sim = match args.threshold {
                Some(t) => Some(eval_topical(&env, &data, &TopicalOptions { threshold: Some(t), ..opts })?),
                None => None,
            };
            write_log(log, |w| {
                exact.write_jsonl(w)?;
                match &sim {
                    Some(s) => s.write_jsonl(w),
                    None => Ok(()),
                }
            })?;
            Report::Topical {
                rows: vec![TopicalRow {
                    label: format!("{}, k={}", model_label(&env), args.k),
                    exact: exact.metrics,
                    sim: sim.map(|s| s.metrics),
                }],
            }
        }
        EvalKind::Moderation => {
            let records: Vec<PromptRecord> = read_jsonl_path(require_data(args)?)?;
            let (harmful, helpful) = split_prompts(&records);
            let modes = match args.mode {
                Some(m) => vec![m],
                None => ModerationMode::ALL.to_vec(),
            };
            let mut runs = Vec::new();
            for mode in modes {
                runs.push(eval_moderation(&env, &harmful, &helpful, mode)?);
            }
            write_log(log, |w| runs.iter().try_for_each(|r| r.write_jsonl(w)))?;
            Report::Moderation {
                rows: runs.into_iter().map(|r| r.metrics).collect(),
            }
        }
        EvalKind::Factcheck => {
            let records: Vec<FactRecord> = read_jsonl_path(require_data(args)?)?;
            let run = eval_factcheck(&env, &records)?;
            write_log(log, |w| run.write_jsonl(w))?;
            Report::FactCheck { metrics: run.metrics }
        }
        EvalKind::Hallucination => {
            let questions: Vec<QuestionRecord> = match &args.data {
                Some(path) => read_jsonl_path(path)?,
                None => default_questions(),
            };
            let opts = if args.markers.is_empty() {
                HallucinationOptions::default()
            } else {
                HallucinationOptions {
                    markers: args.markers.clone(),
                }
            };
            let run = eval_hallucination(&env, &questions, &opts)?;
            write_log(log, |w| run.write_jsonl(w))?;
            Report::Hallucination { metrics: run.metrics }
        }
    };
    let text = render(&report, args.format);
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(io_err(path)),
        None => out.write_all(text.as_bytes()).map_err(stdout_err),
    }
}

pub fn lint<W: Write>(args: &LintArgs, out: &mut W) -> Result<(), CliError> {
    let rt = load_app(&args.config)?;
    let cfg = &rt.app().config;
    for w in &cfg.warnings {
        writeln!(out, "{w}").map_err(stdout_err)?;
    }
    let rails = |kinds: &[railgate_core::rails::RailKind]| {
        if kinds.is_empty() {
            "none".to_string()
        } else {
            kinds.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", ")
        }
    };
    writeln!(
        out,
        "{}: ok ({} flows, {} user forms, {} bot forms; input rails: {}; output rails: {})",
        cfg.id,
        cfg.script.flows.len(),
        cfg.script.user_defs.len(),
        cfg.script.bot_defs.len(),
        rails(&cfg.rails.input),
        rails(&cfg.rails.output),
    )
    .map_err(stdout_err)
}
