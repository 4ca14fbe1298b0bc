use std::fmt;
use std::sync::Arc;

use crate::ast::Span;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
        })
    }
}

/// A positioned message about a script. Lines and columns are 1-based.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
    pub file: Option<Arc<str>>,
    pub line: usize,
    pub column: usize,
}

impl Diagnostic {
    pub fn error(message: impl Into<String>, span: &Span) -> Self {
        Self::at(Severity::Error, message, span)
    }

    pub fn warning(message: impl Into<String>, span: &Span) -> Self {
        Self::at(Severity::Warning, message, span)
    }

    fn at(severity: Severity, message: impl Into<String>, span: &Span) -> Self {
        Self {
            severity,
            message: message.into(),
            file: span.file.clone(),
            line: span.line,
            column: span.column,
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(file) = &self.file {
            write!(f, "{file}:")?;
        }
        write!(
            f,
            "{}:{}: {}: {}",
            self.line, self.column, self.severity, self.message
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LexErrorKind {
    TabIndentation,
    UnterminatedString,
    InvalidEscape(char),
    UnexpectedChar(char),
    InconsistentDedent,
}

impl fmt::Display for LexErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LexErrorKind::TabIndentation => f.write_str("tab in indentation (use spaces)"),
            LexErrorKind::UnterminatedString => f.write_str("unterminated string literal"),
            LexErrorKind::InvalidEscape(c) => write!(f, "invalid escape sequence `\\{c}`"),
            LexErrorKind::UnexpectedChar(c) => write!(f, "unexpected character `{c}`"),
            LexErrorKind::InconsistentDedent => {
                f.write_str("dedent does not match any enclosing indentation level")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{line}:{column}: {kind}")]
pub struct LexError {
    pub kind: LexErrorKind,
    pub line: usize,
    pub column: usize,
}

/// Parse failure carrying the first error found.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{diagnostic}")]
pub struct ParseError {
    pub diagnostic: Diagnostic,
}

impl ParseError {
    pub fn new(message: impl Into<String>, span: &Span) -> Self {
        Self {
            diagnostic: Diagnostic::error(message, span),
        }
    }
}
