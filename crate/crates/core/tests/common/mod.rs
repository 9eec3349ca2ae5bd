//! Oracles, generators and checks shared by the integration tests and the
//! acceptance harness. Each check returns `Err` with a readable reason.
#![allow(dead_code)]

pub mod fixtures;
pub mod language;
pub mod procedures;
pub mod runs;

use pika_core::platform::CommunityState;

pub const COMMUNITY: &str = include_str!("../../fixtures/community.json");

pub fn community() -> CommunityState {
    serde_json::from_str(COMMUNITY).unwrap()
}

pub fn community_json() -> serde_json::Value {
    serde_json::from_str(COMMUNITY).unwrap()
}

/// Turns a failed check into a proptest failure.
pub fn prop(result: Result<(), String>) -> Result<(), proptest::test_runner::TestCaseError> {
    result.map_err(proptest::test_runner::TestCaseError::fail)
}
