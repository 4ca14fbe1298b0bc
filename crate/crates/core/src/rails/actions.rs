use super::{check_facts, check_hallucination, check_jailbreak, output_moderation, RailError, RailVerdict};
use crate::runtime::{
    ActionContext, ActionError, ActionOutput, ActionRegistry, DuplicateAction, BOT_MESSAGE_PROMPT, LAST_BOT_MESSAGE,
    LAST_USER_MESSAGE, RELEVANT_CHUNKS,
};
use crate::value::Value;

fn verdict(result: Result<RailVerdict, RailError>) -> Result<ActionOutput, ActionError> {
    let verdict = result.map_err(ActionError::new)?;
    Ok(ActionOutput {
        value: Value::Bool(verdict.allowed),
        verdict: Some(verdict),
    })
}

fn required(ctx: &ActionContext, arg: &str, key: &str) -> String {
    ctx.text(arg, key).unwrap_or_default()
}

/// Registers the rail actions. Each returns `true` when the message may pass.
///
/// - `check_jailbreak(user_input = $last_user_message)`
/// - `output_moderation(bot_response = $last_bot_message)`
/// - `check_facts(evidence = $relevant_chunks, bot_response = $last_bot_message)`
/// - `check_hallucination(bot_response = $last_bot_message)`, sampling the
///   prompt in `$bot_message_prompt`; predefined messages pass unchecked.
/// - `retrieve_relevant_chunks(query = $last_user_message)` returns the
///   nearest knowledge chunks as text.
pub fn register_builtin_actions(registry: &mut ActionRegistry) -> Result<(), DuplicateAction> {
    registry.register("check_jailbreak", |ctx| {
        let input = required(ctx, "user_input", LAST_USER_MESSAGE);
        verdict(check_jailbreak(ctx.gateway, &ctx.app.config.rail_templates, &input))
    })?;
    registry.register("output_moderation", |ctx| {
        let response = required(ctx, "bot_response", LAST_BOT_MESSAGE);
        verdict(output_moderation(ctx.gateway, &ctx.app.config.rail_templates, &response))
    })?;
    registry.register("check_facts", |ctx| {
        let evidence = required(ctx, "evidence", RELEVANT_CHUNKS);
        let response = required(ctx, "bot_response", LAST_BOT_MESSAGE);
        verdict(check_facts(ctx.gateway, &ctx.app.config.rail_templates, &evidence, &response))
    })?;
    registry.register("check_hallucination", |ctx| {
        let Some(prompt) = ctx.text("prompt", BOT_MESSAGE_PROMPT) else {
            return Ok(Value::Bool(true).into());
        };
        let response = required(ctx, "bot_response", LAST_BOT_MESSAGE);
        let cfg = &ctx.app.config.rails.hallucination;
        verdict(check_hallucination(
            ctx.gateway,
            &ctx.app.config.rail_templates,
            &prompt,
            &response,
            cfg,
        ))
    })?;
    registry.register("retrieve_relevant_chunks", |ctx| {
        let query = required(ctx, "query", LAST_USER_MESSAGE);
        let chunks = ctx.app.retrieve_chunks(&query).map_err(ActionError::new)?;
        Ok(Value::Text(chunks).into())
    })?;
    Ok(())
}
