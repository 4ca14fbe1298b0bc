//! Guardrails engine: embedding retrieval, the LLM gateway, the event-driven
//! dialogue runtime, the LLM-judged safety rails and application loading.

pub mod app;
pub mod config;
pub mod embedding;
pub mod llm;
pub mod rails;
pub mod runtime;
pub mod value;

pub use app::{embedder_from_config, llm_from_config, load_app, runtime_for, RailsApp};
pub use config::{load_config, parse_config, ConfigError, RailsAppConfig};
pub use runtime::{DialogueState, Event, Runtime, RuntimeError, SequencedEvent, TurnOptions, TurnOutcome, TurnTrace};
pub use value::Value;
