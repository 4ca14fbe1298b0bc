//! Recursive-descent parser over the token stream.
//!
//! Grammar (`words` is one or more bare words on a single line):
//!
//! ```text
//! script   = { block }
//! block    = "define" "user" words NL [ INDENT { STRING NL } DEDENT ]
//!          | "define" "bot"  words NL INDENT STRING NL { STRING NL } DEDENT
//!          | "define" "flow" words NL INDENT element { element } DEDENT
//! element  = "user" ( "..." | words ) NL
//!          | "bot"  ( "..." | words ) NL
//!          | [ VAR "=" ] "execute" action NL
//!          | VAR "=" expr NL
//!          | "if" expr NL body [ "else" NL body ]
//!          | "stop" NL
//! body     = INDENT element { element } DEDENT
//! action   = words [ "(" [ arg { "," arg } ] ")" ]
//! arg      = IDENT "=" expr
//! expr     = and { "or" and }
//! and      = unary { "and" unary }
//! unary    = "not" unary | cmp
//! cmp      = primary [ ( "==" | "!=" ) primary ]
//! primary  = VAR | STRING | NUMBER | "true" | "false" | "(" expr ")"
//! ```

use std::sync::Arc;

use crate::ast::*;
use crate::diagnostic::ParseError;
use crate::lexer::{tokenize, Token, TokenKind};

/// Parses an anonymous script.
pub fn parse_script(source: &str) -> Result<Script, ParseError> {
    parse_named(source, "")
}

/// Parses a script whose diagnostics should carry `name` as file name.
pub fn parse_named(source: &str, name: &str) -> Result<Script, ParseError> {
    let file: Option<Arc<str>> = if name.is_empty() {
        None
    } else {
        Some(Arc::from(name))
    };
    let tokens = tokenize(source).map_err(|e| {
        ParseError::new(e.kind.to_string(), &Span::new(file.clone(), e.line, e.column))
    })?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        file,
    };
    let mut script = parser.script()?;
    script.source_name = name.to_string();
    Ok(script)
}

/// Parses a single expression, e.g. `not $allowed`.
pub fn parse_expr(source: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(source)
        .map_err(|e| ParseError::new(e.kind.to_string(), &Span::new(None, e.line, e.column)))?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        file: None,
    };
    let expr = parser.expr()?;
    parser.expect_newline()?;
    if let Some(tok) = parser.peek() {
        return Err(parser.error_at(tok, format!("unexpected {} after expression", tok.kind)));
    }
    Ok(expr)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    file: Option<Arc<str>>,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kind(&self) -> Option<&TokenKind> {
        self.peek().map(|t| &t.kind)
    }

    fn next(&mut self) -> Option<Token> {
        let tok = self.tokens.get(self.pos).cloned();
        if tok.is_some() {
            self.pos += 1;
        }
        tok
    }

    fn span_of(&self, tok: &Token) -> Span {
        Span::new(self.file.clone(), tok.line, tok.column)
    }

    fn eof_span(&self) -> Span {
        match self.tokens.last() {
            Some(t) => Span::new(self.file.clone(), t.line, t.column),
            None => Span::new(self.file.clone(), 1, 1),
        }
    }

    fn error_at(&self, tok: &Token, message: impl Into<String>) -> ParseError {
        ParseError::new(message, &self.span_of(tok))
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        match self.peek() {
            Some(tok) => self.error_at(tok, format!("expected {expected}, found {}", tok.kind)),
            None => ParseError::new(
                format!("expected {expected}, found end of input"),
                &self.eof_span(),
            ),
        }
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek_kind() == Some(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, kind: &TokenKind, expected: &str) -> Result<Token, ParseError> {
        if self.peek_kind() == Some(kind) {
            Ok(self.next().unwrap())
        } else {
            Err(self.unexpected(expected))
        }
    }

    fn expect_newline(&mut self) -> Result<(), ParseError> {
        self.expect(&TokenKind::Newline, "end of line").map(|_| ())
    }

    fn script(&mut self) -> Result<Script, ParseError> {
        let mut script = Script::default();
        while let Some(tok) = self.peek().cloned() {
            match tok.kind {
                TokenKind::Define => self.define(&mut script)?,
                TokenKind::Indent => {
                    return Err(self.error_at(&tok, "unexpected indentation at top level"))
                }
                _ => return Err(self.unexpected("`define`")),
            }
        }
        Ok(script)
    }

    fn define(&mut self, script: &mut Script) -> Result<(), ParseError> {
        let define = self.next().unwrap();
        let span = self.span_of(&define);
        let kind = self.next();
        match kind.as_ref().map(|t| &t.kind) {
            Some(TokenKind::User) => {
                let form = self.canonical_form()?;
                let examples = self.string_body(false)?;
                script.user_defs.push(UserMessageDef {
                    canonical_form: form,
                    examples,
                    span,
                });
            }
            Some(TokenKind::Bot) => {
                let form = self.canonical_form()?;
                let utterances = self.string_body(true)?;
                script.bot_defs.push(BotMessageDef {
                    canonical_form: form,
                    utterances,
                    span,
                });
            }
            Some(TokenKind::Flow) => {
                let name = self.words("flow name")?.join(" ");
                self.expect_newline()?;
                if !matches!(self.peek_kind(), Some(TokenKind::Indent)) {
                    return Err(self.unexpected("an indented flow body"));
                }
                let elements = self.body()?;
                script.flows.push(FlowDef {
                    name,
                    elements,
                    span,
                });
            }
            _ => {
                self.pos -= usize::from(kind.is_some());
                return Err(self.unexpected("`user`, `bot` or `flow` after `define`"));
            }
        }
        Ok(())
    }

    /// Bare words up to (not including) the end of line.
    fn words(&mut self, what: &str) -> Result<Vec<String>, ParseError> {
        let mut words = Vec::new();
        while let Some(tok) = self.peek() {
            if !tok.kind.is_word() {
                break;
            }
            words.push(tok.lexeme.clone());
            self.pos += 1;
        }
        if words.is_empty() {
            return Err(self.unexpected(what));
        }
        Ok(words)
    }

    /// Lowercase words making up a canonical form, followed by end of line.
    fn canonical_form(&mut self) -> Result<String, ParseError> {
        let start = self.pos;
        let words = self.words("a canonical form")?;
        for (offset, word) in words.iter().enumerate() {
            if !is_form_word(word) {
                let tok = &self.tokens[start + offset];
                return Err(self.error_at(
                    tok,
                    format!("canonical form word `{word}` must be a lowercase identifier"),
                ));
            }
        }
        self.expect_newline()?;
        Ok(words.join(" "))
    }

    fn string_body(&mut self, required: bool) -> Result<Vec<String>, ParseError> {
        let mut items = Vec::new();
        if self.eat(&TokenKind::Indent) {
            loop {
                match self.peek_kind() {
                    Some(TokenKind::Str(_)) => {
                        let tok = self.next().unwrap();
                        let TokenKind::Str(value) = tok.kind else {
                            unreachable!()
                        };
                        if items.contains(&value) {
                            return Err(ParseError::new(
                                format!("duplicate utterance \"{value}\""),
                                &Span::new(self.file.clone(), tok.line, tok.column),
                            ));
                        }
                        items.push(value);
                        self.expect_newline()?;
                    }
                    Some(TokenKind::Dedent) => {
                        self.pos += 1;
                        break;
                    }
                    None => break,
                    _ => return Err(self.unexpected("a quoted utterance")),
                }
            }
        }
        if required && items.is_empty() {
            return Err(self.unexpected("at least one indented quoted utterance"));
        }
        Ok(items)
    }

    fn body(&mut self) -> Result<Vec<FlowElement>, ParseError> {
        self.expect(&TokenKind::Indent, "an indented block")?;
        let mut elements = Vec::new();
        loop {
            match self.peek_kind() {
                Some(TokenKind::Dedent) => {
                    self.pos += 1;
                    break;
                }
                None => break,
                _ => elements.push(self.element()?),
            }
        }
        if elements.is_empty() {
            return Err(self.unexpected("at least one flow element"));
        }
        Ok(elements)
    }

    fn element(&mut self) -> Result<FlowElement, ParseError> {
        let tok = self.peek().cloned().ok_or_else(|| self.unexpected("a flow element"))?;
        let span = self.span_of(&tok);
        let kind = match &tok.kind {
            TokenKind::User | TokenKind::Bot => {
                self.pos += 1;
                let form = if self.eat(&TokenKind::Ellipsis) {
                    self.expect_newline()?;
                    Form::Wildcard
                } else {
                    Form::Named(self.canonical_form()?)
                };
                if tok.kind == TokenKind::User {
                    Element::UserMatch(form)
                } else {
                    Element::BotEmit(form)
                }
            }
            TokenKind::Execute => {
                self.pos += 1;
                let (action, args) = self.action()?;
                self.expect_newline()?;
                Element::ExecuteAction {
                    action,
                    args,
                    result_var: None,
                }
            }
            TokenKind::Var(name) => {
                let var = name.clone();
                self.pos += 1;
                self.expect(&TokenKind::Equals, "`=`")?;
                if self.eat(&TokenKind::Execute) {
                    let (action, args) = self.action()?;
                    self.expect_newline()?;
                    Element::ExecuteAction {
                        action,
                        args,
                        result_var: Some(var),
                    }
                } else {
                    let expr = self.expr()?;
                    self.expect_newline()?;
                    Element::Assign { var, expr }
                }
            }
            TokenKind::If => {
                self.pos += 1;
                let cond = self.expr()?;
                self.expect_newline()?;
                let then_branch = self.body()?;
                let else_branch = if self.eat(&TokenKind::Else) {
                    self.expect_newline()?;
                    self.body()?
                } else {
                    Vec::new()
                };
                Element::If {
                    cond,
                    then_branch,
                    else_branch,
                }
            }
            TokenKind::Stop => {
                self.pos += 1;
                self.expect_newline()?;
                Element::Stop
            }
            TokenKind::Else => return Err(self.error_at(&tok, "`else` without a matching `if`")),
            TokenKind::Indent => return Err(self.error_at(&tok, "unexpected indentation")),
            _ => return Err(self.unexpected("a flow element")),
        };
        Ok(FlowElement { kind, span })
    }

    fn action(&mut self) -> Result<(String, Vec<(String, Expr)>), ParseError> {
        let start = self.pos;
        let words = self.words("an action name")?;
        for (offset, word) in words.iter().enumerate() {
            if !is_identifier(word) {
                let tok = &self.tokens[start + offset];
                return Err(self.error_at(tok, format!("invalid action name part `{word}`")));
            }
        }
        let name = normalize_action_name(&words.join(" "));
        let mut args = Vec::new();
        if self.eat(&TokenKind::LParen)
            && !self.eat(&TokenKind::RParen) {
                loop {
                    let tok = self.next().ok_or_else(|| self.unexpected("an argument name"))?;
                    if !tok.kind.is_word() {
                        self.pos -= 1;
                        return Err(self.unexpected("an argument name"));
                    }
                    if args.iter().any(|(n, _): &(String, Expr)| *n == tok.lexeme) {
                        return Err(self.error_at(&tok, format!("duplicate argument `{}`", tok.lexeme)));
                    }
                    self.expect(&TokenKind::Equals, "`=`")?;
                    let value = self.expr()?;
                    args.push((tok.lexeme, value));
                    if self.eat(&TokenKind::Comma) {
                        continue;
                    }
                    self.expect(&TokenKind::RParen, "`,` or `)`")?;
                    break;
                }
            }
        Ok((name, args))
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.and_expr()?;
        while self.eat(&TokenKind::Or) {
            let right = self.and_expr()?;
            left = Expr::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut left = self.unary()?;
        while self.eat(&TokenKind::And) {
            let right = self.unary()?;
            left = Expr::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat(&TokenKind::Not) {
            return Ok(Expr::Not(Box::new(self.unary()?)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Expr, ParseError> {
        let left = self.primary()?;
        if self.eat(&TokenKind::EqEq) {
            let right = self.primary()?;
            return Ok(Expr::Eq(Box::new(left), Box::new(right)));
        }
        if self.eat(&TokenKind::NotEq) {
            let right = self.primary()?;
            return Ok(Expr::Neq(Box::new(left), Box::new(right)));
        }
        Ok(left)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let expr = match self.peek_kind() {
            Some(TokenKind::Var(name)) => Expr::Var(name.clone()),
            Some(TokenKind::Str(s)) => Expr::Text(s.clone()),
            Some(TokenKind::Number(n)) => Expr::Number(*n),
            Some(TokenKind::True) => Expr::Bool(true),
            Some(TokenKind::False) => Expr::Bool(false),
            Some(TokenKind::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(&TokenKind::RParen, "`)`")?;
                return Ok(inner);
            }
            _ => return Err(self.unexpected("an expression")),
        };
        self.pos += 1;
        Ok(expr)
    }
}

fn is_identifier(word: &str) -> bool {
    let mut chars = word.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn is_form_word(word: &str) -> bool {
    is_identifier(word) && !word.chars().any(|c| c.is_ascii_uppercase())
}
