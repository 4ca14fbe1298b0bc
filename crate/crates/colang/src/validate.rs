use std::collections::HashMap;

use crate::ast::*;
use crate::diagnostic::Diagnostic;

/// Bot forms handled by the runtime itself rather than by a definition.
pub const REMOVE_LAST_MESSAGE: &str = "remove last message";

/// Checks cross-definition rules that the parser cannot see on its own.
///
/// Errors: duplicate flow names, duplicate canonical forms, `bot ...` used
/// anywhere but as the first element of a flow.
/// Warnings: flows matching user forms that have no examples, bot forms with
/// no definition, and example utterances shared by different forms.
pub fn validate(script: &Script) -> Vec<Diagnostic> {
    let mut diags = Vec::new();

    let mut seen_user: HashMap<&str, &Span> = HashMap::new();
    for def in &script.user_defs {
        if let Some(first) = seen_user.get(def.canonical_form.as_str()) {
            diags.push(Diagnostic::error(
                format!(
                    "duplicate user canonical form `{}` (first defined at {first})",
                    def.canonical_form
                ),
                &def.span,
            ));
        } else {
            seen_user.insert(&def.canonical_form, &def.span);
        }
    }

    let mut seen_bot: HashMap<&str, &Span> = HashMap::new();
    for def in &script.bot_defs {
        if let Some(first) = seen_bot.get(def.canonical_form.as_str()) {
            diags.push(Diagnostic::error(
                format!(
                    "duplicate bot canonical form `{}` (first defined at {first})",
                    def.canonical_form
                ),
                &def.span,
            ));
        } else {
            seen_bot.insert(&def.canonical_form, &def.span);
        }
    }

    let mut seen_flows: HashMap<&str, &Span> = HashMap::new();
    for flow in &script.flows {
        if let Some(first) = seen_flows.get(flow.name.as_str()) {
            diags.push(Diagnostic::error(
                format!("duplicate flow `{}` (first defined at {first})", flow.name),
                &flow.span,
            ));
        } else {
            seen_flows.insert(&flow.name, &flow.span);
        }
    }

    let mut example_owner: HashMap<&str, &str> = HashMap::new();
    for def in &script.user_defs {
        for ex in &def.examples {
            match example_owner.get(ex.as_str()) {
                Some(owner) if *owner != def.canonical_form => diags.push(Diagnostic::warning(
                    format!(
                        "example \"{ex}\" appears under both `{owner}` and `{}`",
                        def.canonical_form
                    ),
                    &def.span,
                )),
                Some(_) => {}
                None => {
                    example_owner.insert(ex, &def.canonical_form);
                }
            }
        }
    }

    for flow in &script.flows {
        let first = flow.elements.first().map(|e| e as *const FlowElement);
        flow.visit(&mut |el| match &el.kind {
            Element::UserMatch(Form::Named(form)) => {
                let has_examples = script
                    .user_def(form)
                    .is_some_and(|d| !d.examples.is_empty());
                if !has_examples {
                    diags.push(Diagnostic::warning(
                        format!("user form `{form}` has no example utterances; matching relies on the LLM"),
                        &el.span,
                    ));
                }
            }
            Element::BotEmit(Form::Named(form)) => {
                if form != REMOVE_LAST_MESSAGE && script.bot_def(form).is_none() {
                    diags.push(Diagnostic::warning(
                        format!("bot form `{form}` has no definition; the message will be generated"),
                        &el.span,
                    ));
                }
            }
            Element::BotEmit(Form::Wildcard) if Some(el as *const FlowElement) != first => {
                diags.push(Diagnostic::error(
                    "`bot ...` is only allowed as the first element of a flow",
                    &el.span,
                ));
            }
            _ => {}
        });
    }

    diags
}
