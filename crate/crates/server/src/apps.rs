//! Discovery of the apps a server or CLI runs.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use railgate_core::config::CONFIG_FILE;
use railgate_core::{load_app, Runtime};

use crate::ServerError;

/// Loaded apps by id. Immutable once built.
#[derive(Debug, Default)]
pub struct AppRegistry {
    apps: BTreeMap<String, Arc<Runtime>>,
}

impl AppRegistry {
    /// `dir` is either an app (it holds `config.yml`) or a folder whose
    /// subdirectories are apps.
    pub fn discover(dir: &Path) -> Result<Self, ServerError> {
        let mut registry = AppRegistry::default();
        if dir.join(CONFIG_FILE).is_file() {
            registry.insert(load_app(dir)?)?;
            return Ok(registry);
        }
        let entries = std::fs::read_dir(dir).map_err(|source| ServerError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut dirs: Vec<_> = entries
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.join(CONFIG_FILE).is_file())
            .collect();
        dirs.sort();
        for app_dir in dirs {
            registry.insert(load_app(&app_dir)?)?;
        }
        if registry.apps.is_empty() {
            return Err(ServerError::NoApps(dir.to_path_buf()));
        }
        Ok(registry)
    }

    pub fn insert(&mut self, runtime: Runtime) -> Result<(), ServerError> {
        let id = runtime.app().config.id.clone();
        if self.apps.contains_key(&id) {
            return Err(ServerError::DuplicateApp(id));
        }
        self.apps.insert(id, Arc::new(runtime));
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Arc<Runtime>> {
        self.apps.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.apps.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.apps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.apps.is_empty()
    }
}
