//! Governance policies for online communities: a component registry, a
//! declarative policy language, its compiler, and an event-driven engine that
//! runs proposals against a simulated chat platform.

pub mod compiler;
pub mod engine;
pub mod entity;
pub mod platform;
pub mod policy;
pub mod procedures;
pub mod reference;
pub mod registry;
pub mod rng;
pub mod scenario;
pub mod stdlib;
pub mod validate;
