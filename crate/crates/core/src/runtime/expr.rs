use std::collections::BTreeMap;

use railgate_colang::Expr;

use crate::value::Value;

/// Evaluates a condition or assignment. Total: unset variables read as
/// null, `not null` is true and comparisons across types are false.
pub fn eval_expression(context: &BTreeMap<String, Value>, expr: &Expr) -> Value {
    match expr {
        Expr::Var(name) => context.get(name).cloned().unwrap_or(Value::Null),
        Expr::Bool(b) => Value::Bool(*b),
        Expr::Text(s) => Value::Text(s.clone()),
        Expr::Number(n) => Value::Number(*n),
        Expr::Not(e) => Value::Bool(!eval_expression(context, e).truthy()),
        Expr::And(a, b) => Value::Bool(eval_expression(context, a).truthy() && eval_expression(context, b).truthy()),
        Expr::Or(a, b) => Value::Bool(eval_expression(context, a).truthy() || eval_expression(context, b).truthy()),
        Expr::Eq(a, b) => Value::Bool(eval_expression(context, a) == eval_expression(context, b)),
        Expr::Neq(a, b) => Value::Bool(eval_expression(context, a) != eval_expression(context, b)),
    }
}

/// Replaces `$name` in a bot utterance with the context value (empty when unset).
pub fn interpolate(text: &str, context: &BTreeMap<String, Value>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let starts_name = c == '$'
            && chars
                .peek()
                .is_some_and(|(_, n)| n.is_ascii_alphabetic() || *n == '_');
        if !starts_name {
            out.push(c);
            continue;
        }
        let mut end = i + 1;
        while let Some((j, n)) = chars.peek() {
            if n.is_ascii_alphanumeric() || *n == '_' {
                end = j + n.len_utf8();
                chars.next();
            } else {
                break;
            }
        }
        match context.get(&text[i + 1..end]) {
            Some(Value::Null) | None => {}
            Some(v) => out.push_str(&v.to_string()),
        }
    }
    out
}
