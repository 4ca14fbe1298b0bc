use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::app::RailsApp;
use crate::llm::Gateway;
use crate::rails::RailVerdict;
use crate::value::Value;

/// What an action sees when it runs.
pub struct ActionContext<'a> {
    pub args: &'a BTreeMap<String, Value>,
    pub context: &'a BTreeMap<String, Value>,
    pub gateway: &'a Gateway,
    pub app: &'a RailsApp,
}

impl ActionContext<'_> {
    /// Text from the named argument, falling back to a context variable.
    pub fn text(&self, arg: &str, context_key: &str) -> Option<String> {
        self.args
            .get(arg)
            .or_else(|| self.context.get(context_key))
            .filter(|v| !v.is_null())
            .map(|v| v.to_string())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActionOutput {
    pub value: Value,
    /// Present for rail actions so traces can show the judgment.
    pub verdict: Option<RailVerdict>,
}

impl From<Value> for ActionOutput {
    fn from(value: Value) -> Self {
        ActionOutput { value, verdict: None }
    }
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct ActionError(pub String);

impl ActionError {
    pub fn new(msg: impl fmt::Display) -> Self {
        ActionError(msg.to_string())
    }
}

pub type ActionFn = Arc<dyn Fn(&ActionContext) -> Result<ActionOutput, ActionError> + Send + Sync>;

#[derive(Debug, Error, PartialEq)]
#[error("action `{0}` is already registered")]
pub struct DuplicateAction(pub String);

/// Actions callable from flows, keyed by snake_case name.
#[derive(Clone, Default)]
pub struct ActionRegistry {
    actions: BTreeMap<String, ActionFn>,
}

impl fmt::Debug for ActionRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.actions.keys()).finish()
    }
}

impl ActionRegistry {
    pub fn new() -> Self {
        ActionRegistry::default()
    }

    pub fn register<F>(&mut self, name: &str, action: F) -> Result<(), DuplicateAction>
    where
        F: Fn(&ActionContext) -> Result<ActionOutput, ActionError> + Send + Sync + 'static,
    {
        let name = railgate_colang::normalize_action_name(name);
        if self.actions.contains_key(&name) {
            return Err(DuplicateAction(name));
        }
        self.actions.insert(name, Arc::new(action));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ActionFn> {
        self.actions.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.actions.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.actions.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_rejected_after_normalizing() {
        let mut r = ActionRegistry::new();
        r.register("wolfram alpha request", |_| Ok(Value::Null.into())).unwrap();
        assert!(r.contains("wolfram_alpha_request"));
        assert_eq!(
            r.register("wolfram_alpha_request", |_| Ok(Value::Null.into())),
            Err(DuplicateAction("wolfram_alpha_request".into()))
        );
    }
}
