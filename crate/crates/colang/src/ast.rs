//! Syntax tree for parsed Colang scripts.

use std::fmt;
use std::sync::Arc;

/// Source position of a definition or flow element.
///
/// Spans always compare equal, so structural equality of two trees ignores
/// where their nodes came from.
#[derive(Clone, Debug, Default)]
pub struct Span {
    pub file: Option<Arc<str>>,
    pub line: usize,
    pub column: usize,
}

impl Span {
    pub fn new(file: Option<Arc<str>>, line: usize, column: usize) -> Self {
        Self { file, line, column }
    }
}

impl PartialEq for Span {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.file {
            Some(file) => write!(f, "{}:{}:{}", file, self.line, self.column),
            None => write!(f, "{}:{}", self.line, self.column),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Script {
    pub user_defs: Vec<UserMessageDef>,
    pub bot_defs: Vec<BotMessageDef>,
    pub flows: Vec<FlowDef>,
    pub source_name: String,
}

impl Script {
    pub fn is_empty(&self) -> bool {
        self.user_defs.is_empty() && self.bot_defs.is_empty() && self.flows.is_empty()
    }

    /// Concatenates scripts in the given order. Duplicates are left in place
    /// for `validate` to report.
    pub fn merge<I: IntoIterator<Item = Script>>(scripts: I) -> Script {
        let mut merged = Script::default();
        let mut names = Vec::new();
        for script in scripts {
            if !script.source_name.is_empty() {
                names.push(script.source_name.clone());
            }
            merged.user_defs.extend(script.user_defs);
            merged.bot_defs.extend(script.bot_defs);
            merged.flows.extend(script.flows);
        }
        merged.source_name = names.join("+");
        merged
    }

    pub fn user_def(&self, form: &str) -> Option<&UserMessageDef> {
        self.user_defs.iter().find(|d| d.canonical_form == form)
    }

    pub fn bot_def(&self, form: &str) -> Option<&BotMessageDef> {
        self.bot_defs.iter().find(|d| d.canonical_form == form)
    }

    pub fn flow(&self, name: &str) -> Option<&FlowDef> {
        self.flows.iter().find(|f| f.name == name)
    }

    /// Every user canonical form the script knows about: defined forms first,
    /// then forms only referenced from flows, each once, in source order.
    pub fn user_forms(&self) -> Vec<String> {
        let mut forms: Vec<String> = Vec::new();
        let mut push = |form: &str| {
            if !forms.iter().any(|f| f == form) {
                forms.push(form.to_string());
            }
        };
        for def in &self.user_defs {
            push(&def.canonical_form);
        }
        for flow in &self.flows {
            flow.visit(&mut |el| {
                if let Element::UserMatch(Form::Named(form)) = &el.kind {
                    push(form);
                }
            });
        }
        forms
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserMessageDef {
    pub canonical_form: String,
    pub examples: Vec<String>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BotMessageDef {
    pub canonical_form: String,
    pub utterances: Vec<String>,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowDef {
    pub name: String,
    pub elements: Vec<FlowElement>,
    pub span: Span,
}

impl FlowDef {
    /// True when the flow starts with `user ...` and therefore runs on every
    /// user message.
    pub fn is_input_rail(&self) -> bool {
        matches!(
            self.elements.first().map(|e| &e.kind),
            Some(Element::UserMatch(Form::Wildcard))
        )
    }

    /// True when the flow starts with `bot ...` and therefore vets every bot
    /// message.
    pub fn is_output_rail(&self) -> bool {
        matches!(
            self.elements.first().map(|e| &e.kind),
            Some(Element::BotEmit(Form::Wildcard))
        )
    }

    /// Depth-first walk over every element, including nested branches.
    pub fn visit<F: FnMut(&FlowElement)>(&self, f: &mut F) {
        fn walk<F: FnMut(&FlowElement)>(elements: &[FlowElement], f: &mut F) {
            for el in elements {
                f(el);
                if let Element::If {
                    then_branch,
                    else_branch,
                    ..
                } = &el.kind
                {
                    walk(then_branch, f);
                    walk(else_branch, f);
                }
            }
        }
        walk(&self.elements, f);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowElement {
    pub kind: Element,
    pub span: Span,
}

impl FlowElement {
    pub fn new(kind: Element) -> Self {
        Self {
            kind,
            span: Span::default(),
        }
    }
}

impl From<Element> for FlowElement {
    fn from(kind: Element) -> Self {
        FlowElement::new(kind)
    }
}

/// Message form used by `user` and `bot` elements.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Form {
    Named(String),
    Wildcard,
}

impl Form {
    pub fn named(&self) -> Option<&str> {
        match self {
            Form::Named(s) => Some(s),
            Form::Wildcard => None,
        }
    }
}

impl fmt::Display for Form {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Form::Named(s) => f.write_str(s),
            Form::Wildcard => f.write_str("..."),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Element {
    UserMatch(Form),
    BotEmit(Form),
    ExecuteAction {
        action: String,
        args: Vec<(String, Expr)>,
        result_var: Option<String>,
    },
    Assign {
        var: String,
        expr: Expr,
    },
    If {
        cond: Expr,
        then_branch: Vec<FlowElement>,
        else_branch: Vec<FlowElement>,
    },
    Stop,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Var(String),
    Bool(bool),
    Text(String),
    Number(f64),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Eq(Box<Expr>, Box<Expr>),
    Neq(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn negate(inner: Expr) -> Expr {
        Expr::Not(Box::new(inner))
    }
}

/// Normalizes an action name written either as `snake_case` or as
/// space-separated words to `snake_case`.
pub fn normalize_action_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join("_")
}
