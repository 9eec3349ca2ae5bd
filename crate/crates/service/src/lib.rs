//! Command-line verbs and the HTTP API over the policy engine. Both read and
//! write the same file formats, so a CLI run and an API session given the same
//! inputs produce the same payloads.

pub mod api;
pub mod commands;

use std::path::Path;

use pika_core::registry::{load_library, Registry};
use pika_core::stdlib::stdlib_registry;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: {detail}")]
    Parse { path: String, detail: String },
}

pub fn read_file(path: &Path) -> Result<String, LoadError> {
    std::fs::read_to_string(path).map_err(|source| LoadError::Read { path: path.display().to_string(), source })
}

/// The built-in library, or the one at `path`.
pub fn load_registry(path: Option<&Path>) -> Result<Registry, LoadError> {
    match path {
        None => Ok(stdlib_registry()),
        Some(path) => load_library(&read_file(path)?)
            .map_err(|e| LoadError::Parse { path: path.display().to_string(), detail: e.to_string() }),
    }
}

pub fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, LoadError> {
    serde_json::from_str(&read_file(path)?)
        .map_err(|e| LoadError::Parse { path: path.display().to_string(), detail: e.to_string() })
}
