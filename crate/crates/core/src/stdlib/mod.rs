//! The shipped component library and the built-in behaviors it binds to.

pub mod behaviors;
pub mod decorators;
pub mod executions;
pub mod filters;

use crate::registry::{load_library, Registry};

/// The default library document, as shipped.
pub const LIBRARY_JSON: &str = include_str!("library.json");

pub fn stdlib_registry() -> Registry {
    load_library(LIBRARY_JSON).expect("embedded library is valid")
}
