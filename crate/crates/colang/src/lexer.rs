//! Offside-rule tokenizer.
//!
//! Blank and comment-only lines produce no tokens. Every other line ends with
//! a `Newline`; indentation changes between lines produce `Indent`/`Dedent`.

use std::fmt;

use crate::diagnostic::{LexError, LexErrorKind};

#[derive(Clone, Debug, PartialEq)]
pub enum TokenKind {
    Define,
    Flow,
    User,
    Bot,
    Execute,
    If,
    Else,
    Stop,
    Not,
    And,
    Or,
    True,
    False,
    Ident(String),
    Var(String),
    Str(String),
    Number(f64),
    Ellipsis,
    Equals,
    EqEq,
    NotEq,
    LParen,
    RParen,
    Comma,
    Newline,
    Indent,
    Dedent,
}

impl TokenKind {
    fn keyword(word: &str) -> Option<TokenKind> {
        Some(match word {
            "define" => TokenKind::Define,
            "flow" => TokenKind::Flow,
            "user" => TokenKind::User,
            "bot" => TokenKind::Bot,
            "execute" => TokenKind::Execute,
            "if" => TokenKind::If,
            "else" => TokenKind::Else,
            "stop" => TokenKind::Stop,
            "not" => TokenKind::Not,
            "and" => TokenKind::And,
            "or" => TokenKind::Or,
            "true" => TokenKind::True,
            "false" => TokenKind::False,
            _ => return None,
        })
    }

    /// Whether this token is a bare word (identifier or keyword).
    pub fn is_word(&self) -> bool {
        matches!(
            self,
            TokenKind::Define
                | TokenKind::Flow
                | TokenKind::User
                | TokenKind::Bot
                | TokenKind::Execute
                | TokenKind::If
                | TokenKind::Else
                | TokenKind::Stop
                | TokenKind::Not
                | TokenKind::And
                | TokenKind::Or
                | TokenKind::True
                | TokenKind::False
                | TokenKind::Ident(_)
        )
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Ident(s) => write!(f, "identifier `{s}`"),
            TokenKind::Var(s) => write!(f, "variable `${s}`"),
            TokenKind::Str(_) => f.write_str("string literal"),
            TokenKind::Number(n) => write!(f, "number `{n}`"),
            TokenKind::Newline => f.write_str("end of line"),
            TokenKind::Indent => f.write_str("indent"),
            TokenKind::Dedent => f.write_str("dedent"),
            TokenKind::Ellipsis => f.write_str("`...`"),
            TokenKind::Equals => f.write_str("`=`"),
            TokenKind::EqEq => f.write_str("`==`"),
            TokenKind::NotEq => f.write_str("`!=`"),
            TokenKind::LParen => f.write_str("`(`"),
            TokenKind::RParen => f.write_str("`)`"),
            TokenKind::Comma => f.write_str("`,`"),
            other => write!(f, "keyword `{}`", format!("{other:?}").to_lowercase()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub line: usize,
    pub column: usize,
}

/// Splits `source` into tokens. CRLF line endings are accepted.
pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    let normalized = source.replace("\r\n", "\n");
    let mut tokens = Vec::new();
    let mut indents: Vec<usize> = vec![0];

    for (idx, line) in normalized.split('\n').enumerate() {
        let line_no = idx + 1;
        let chars: Vec<char> = line.chars().collect();

        let mut pos = 0;
        while pos < chars.len() && (chars[pos] == ' ' || chars[pos] == '\t') {
            if chars[pos] == '\t' {
                return Err(LexError {
                    kind: LexErrorKind::TabIndentation,
                    line: line_no,
                    column: pos + 1,
                });
            }
            pos += 1;
        }
        if pos == chars.len() || chars[pos] == '#' {
            continue;
        }

        let indent = pos;
        let top = *indents.last().expect("indent stack never empty");
        if indent > top {
            indents.push(indent);
            tokens.push(structural(TokenKind::Indent, line_no, 1));
        } else if indent < top {
            while *indents.last().unwrap() > indent {
                indents.pop();
                tokens.push(structural(TokenKind::Dedent, line_no, 1));
            }
            if *indents.last().unwrap() != indent {
                return Err(LexError {
                    kind: LexErrorKind::InconsistentDedent,
                    line: line_no,
                    column: indent + 1,
                });
            }
        }

        lex_line(&chars, pos, line_no, &mut tokens)?;
        let end = chars.len() + 1;
        tokens.push(structural(TokenKind::Newline, line_no, end));
    }

    let last_line = normalized.split('\n').count();
    while indents.len() > 1 {
        indents.pop();
        tokens.push(structural(TokenKind::Dedent, last_line + 1, 1));
    }
    Ok(tokens)
}

fn structural(kind: TokenKind, line: usize, column: usize) -> Token {
    Token {
        kind,
        lexeme: String::new(),
        line,
        column,
    }
}

fn lex_line(
    chars: &[char],
    mut pos: usize,
    line: usize,
    out: &mut Vec<Token>,
) -> Result<(), LexError> {
    let err = |kind, col: usize| LexError {
        kind,
        line,
        column: col + 1,
    };
    while pos < chars.len() {
        let c = chars[pos];
        let start = pos;
        match c {
            ' ' | '\t' => {
                pos += 1;
                continue;
            }
            '#' => break,
            '"' => {
                pos += 1;
                let mut value = String::new();
                loop {
                    match chars.get(pos) {
                        None => return Err(err(LexErrorKind::UnterminatedString, start)),
                        Some('"') => {
                            pos += 1;
                            break;
                        }
                        Some('\\') => match chars.get(pos + 1) {
                            Some('"') => {
                                value.push('"');
                                pos += 2;
                            }
                            Some('\\') => {
                                value.push('\\');
                                pos += 2;
                            }
                            Some(other) => {
                                return Err(err(LexErrorKind::InvalidEscape(*other), pos))
                            }
                            None => return Err(err(LexErrorKind::UnterminatedString, start)),
                        },
                        Some(ch) => {
                            value.push(*ch);
                            pos += 1;
                        }
                    }
                }
                push(out, TokenKind::Str(value), chars, start, pos, line);
            }
            '$' => {
                pos += 1;
                let name_start = pos;
                while pos < chars.len() && is_ident_char(chars[pos]) {
                    pos += 1;
                }
                if pos == name_start || chars[name_start].is_ascii_digit() {
                    return Err(err(LexErrorKind::UnexpectedChar('$'), start));
                }
                let name: String = chars[name_start..pos].iter().collect();
                push(out, TokenKind::Var(name), chars, start, pos, line);
            }
            '.' => {
                if chars.get(pos + 1) == Some(&'.') && chars.get(pos + 2) == Some(&'.') {
                    pos += 3;
                    push(out, TokenKind::Ellipsis, chars, start, pos, line);
                } else {
                    return Err(err(LexErrorKind::UnexpectedChar('.'), start));
                }
            }
            '=' => {
                if chars.get(pos + 1) == Some(&'=') {
                    pos += 2;
                    push(out, TokenKind::EqEq, chars, start, pos, line);
                } else {
                    pos += 1;
                    push(out, TokenKind::Equals, chars, start, pos, line);
                }
            }
            '!' => {
                if chars.get(pos + 1) == Some(&'=') {
                    pos += 2;
                    push(out, TokenKind::NotEq, chars, start, pos, line);
                } else {
                    return Err(err(LexErrorKind::UnexpectedChar('!'), start));
                }
            }
            '(' | ')' | ',' => {
                pos += 1;
                let kind = match c {
                    '(' => TokenKind::LParen,
                    ')' => TokenKind::RParen,
                    _ => TokenKind::Comma,
                };
                push(out, kind, chars, start, pos, line);
            }
            c if c.is_ascii_digit() => {
                while pos < chars.len() && chars[pos].is_ascii_digit() {
                    pos += 1;
                }
                if chars.get(pos) == Some(&'.')
                    && chars.get(pos + 1).is_some_and(|d| d.is_ascii_digit())
                {
                    pos += 1;
                    while pos < chars.len() && chars[pos].is_ascii_digit() {
                        pos += 1;
                    }
                }
                let text: String = chars[start..pos].iter().collect();
                let value = text.parse::<f64>().expect("digits form a valid float");
                push(out, TokenKind::Number(value), chars, start, pos, line);
            }
            c if c.is_alphabetic() || c == '_' => {
                while pos < chars.len() && is_ident_char(chars[pos]) {
                    pos += 1;
                }
                let word: String = chars[start..pos].iter().collect();
                let kind = TokenKind::keyword(&word).unwrap_or(TokenKind::Ident(word));
                push(out, kind, chars, start, pos, line);
            }
            other => return Err(err(LexErrorKind::UnexpectedChar(other), start)),
        }
    }
    Ok(())
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn push(out: &mut Vec<Token>, kind: TokenKind, chars: &[char], start: usize, end: usize, line: usize) {
    out.push(Token {
        kind,
        lexeme: chars[start..end].iter().collect(),
        line,
        column: start + 1,
    });
}
