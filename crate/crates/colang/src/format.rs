//! Canonical two-space rendering of scripts.

use std::fmt::Write;

use crate::ast::*;

const INDENT: &str = "  ";

/// Renders user definitions, then bot definitions, then flows, separated by
/// blank lines. Parsing the output yields a tree equal to `script`.
pub fn format_script(script: &Script) -> String {
    let mut blocks = Vec::new();
    for def in &script.user_defs {
        let mut out = format!("define user {}\n", def.canonical_form);
        for ex in &def.examples {
            let _ = writeln!(out, "{INDENT}{}", quote(ex));
        }
        blocks.push(out);
    }
    for def in &script.bot_defs {
        let mut out = format!("define bot {}\n", def.canonical_form);
        for u in &def.utterances {
            let _ = writeln!(out, "{INDENT}{}", quote(u));
        }
        blocks.push(out);
    }
    for flow in &script.flows {
        blocks.push(format_flow(flow));
    }
    blocks.join("\n")
}

pub fn format_flow(flow: &FlowDef) -> String {
    let mut out = format!("define flow {}\n", flow.name);
    write_elements(&mut out, &flow.elements, 1);
    out
}

/// Renders flow elements without the `define flow` header, starting at
/// column zero.
pub fn format_elements(elements: &[FlowElement]) -> String {
    let mut out = String::new();
    write_elements(&mut out, elements, 0);
    out
}

fn write_elements(out: &mut String, elements: &[FlowElement], depth: usize) {
    let pad = INDENT.repeat(depth);
    for el in elements {
        match &el.kind {
            Element::UserMatch(form) => {
                let _ = writeln!(out, "{pad}user {form}");
            }
            Element::BotEmit(form) => {
                let _ = writeln!(out, "{pad}bot {form}");
            }
            Element::ExecuteAction {
                action,
                args,
                result_var,
            } => {
                out.push_str(&pad);
                if let Some(var) = result_var {
                    let _ = write!(out, "${var} = ");
                }
                let _ = write!(out, "execute {action}");
                if !args.is_empty() {
                    let rendered: Vec<String> = args
                        .iter()
                        .map(|(name, value)| format!("{name}={}", format_expr(value)))
                        .collect();
                    let _ = write!(out, "({})", rendered.join(", "));
                }
                out.push('\n');
            }
            Element::Assign { var, expr } => {
                let _ = writeln!(out, "{pad}${var} = {}", format_expr(expr));
            }
            Element::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let _ = writeln!(out, "{pad}if {}", format_expr(cond));
                write_elements(out, then_branch, depth + 1);
                if !else_branch.is_empty() {
                    let _ = writeln!(out, "{pad}else");
                    write_elements(out, else_branch, depth + 1);
                }
            }
            Element::Stop => {
                let _ = writeln!(out, "{pad}stop");
            }
        }
    }
}

/// Quotes a string, escaping `"` and `\`.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

// Binding strength, loosest first.
const PREC_OR: u8 = 1;
const PREC_AND: u8 = 2;
const PREC_NOT: u8 = 3;
const PREC_CMP: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(expr: &Expr) -> u8 {
    match expr {
        Expr::Or(..) => PREC_OR,
        Expr::And(..) => PREC_AND,
        Expr::Not(..) => PREC_NOT,
        Expr::Eq(..) | Expr::Neq(..) => PREC_CMP,
        _ => PREC_ATOM,
    }
}

/// Renders an expression with the minimum parentheses needed to reparse it
/// to the same tree.
pub fn format_expr(expr: &Expr) -> String {
    let mut out = String::new();
    write_expr(&mut out, expr, 0);
    out
}

fn write_expr(out: &mut String, expr: &Expr, min_prec: u8) {
    let prec = precedence(expr);
    let parens = prec < min_prec;
    if parens {
        out.push('(');
    }
    match expr {
        Expr::Var(name) => {
            let _ = write!(out, "${name}");
        }
        Expr::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Expr::Text(s) => out.push_str(&quote(s)),
        Expr::Number(n) => {
            let _ = write!(out, "{n}");
        }
        Expr::Not(inner) => {
            out.push_str("not ");
            write_expr(out, inner, PREC_NOT);
        }
        Expr::And(l, r) => {
            write_expr(out, l, PREC_AND);
            out.push_str(" and ");
            write_expr(out, r, PREC_AND + 1);
        }
        Expr::Or(l, r) => {
            write_expr(out, l, PREC_OR);
            out.push_str(" or ");
            write_expr(out, r, PREC_OR + 1);
        }
        Expr::Eq(l, r) | Expr::Neq(l, r) => {
            write_expr(out, l, PREC_ATOM);
            out.push_str(if matches!(expr, Expr::Eq(..)) {
                " == "
            } else {
                " != "
            });
            write_expr(out, r, PREC_ATOM);
        }
    }
    if parens {
        out.push(')');
    }
}
