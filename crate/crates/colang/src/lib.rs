//! Colang subset used to define guardrails: user and bot canonical forms with
//! example utterances, and flows built from message matches, bot messages,
//! action calls, assignments, conditionals and `stop`.
//!
//! ```
//! use railgate_colang::{parse_script, format_script, validate};
//!
//! let script = parse_script("define flow greeting\n  user express greeting\n  bot express greeting\n").unwrap();
//! assert_eq!(script.flows.len(), 1);
//! assert!(validate(&script).iter().all(|d| !d.is_error()));
//! assert_eq!(parse_script(&format_script(&script)).unwrap(), script);
//! ```

pub mod ast;
pub mod diagnostic;
pub mod format;
pub mod lexer;
pub mod parser;
pub mod validate;

pub use ast::{
    normalize_action_name, BotMessageDef, Element, Expr, FlowDef, FlowElement, Form, Script, Span,
    UserMessageDef,
};
pub use diagnostic::{Diagnostic, LexError, LexErrorKind, ParseError, Severity};
pub use format::{format_elements, format_expr, format_flow, format_script, quote};
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::{parse_expr, parse_named, parse_script};
pub use validate::{validate, REMOVE_LAST_MESSAGE};
