//! Declarative policy documents.
//!
//! A policy pairs a custom action (a base action narrowed by filters) with a
//! custom procedure (a base procedure, its settings, decorators, and the
//! executions to run on pass or fail).

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::reference::{parse_reference_text, render_segments, ReferenceError, ReferenceToken, Segment};

/// The value given to one setting in a policy document.
///
/// On the wire every value is plain JSON. A string that is exactly one
/// `${scope.name}` token is a reference; a string mixing text and tokens is a
/// template; anything else is a literal interpreted against the setting's
/// entity during validation.
#[derive(Debug, Clone, PartialEq)]
pub enum SettingValue {
    Literal(serde_json::Value),
    Reference(ReferenceToken),
    Template(Vec<Segment>),
    /// A string whose reference syntax does not parse. Kept so validation can
    /// report it at the right path.
    Malformed { raw: String, error: ReferenceError },
}

impl SettingValue {
    pub fn literal(value: impl Into<serde_json::Value>) -> Self {
        SettingValue::Literal(value.into())
    }

    pub fn from_json(value: serde_json::Value) -> Self {
        match value {
            serde_json::Value::String(raw) => match parse_reference_text(&raw) {
                Ok(mut segments) => match segments.as_slice() {
                    [Segment::Reference(_)] => match segments.pop() {
                        Some(Segment::Reference(token)) => SettingValue::Reference(token),
                        _ => unreachable!(),
                    },
                    [] => SettingValue::Literal(serde_json::Value::String(String::new())),
                    [Segment::Literal(_)] => match segments.pop() {
                        Some(Segment::Literal(text)) => SettingValue::Literal(serde_json::Value::String(text)),
                        _ => unreachable!(),
                    },
                    _ => SettingValue::Template(segments),
                },
                Err(error) => SettingValue::Malformed { raw, error },
            },
            other => SettingValue::Literal(other),
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            SettingValue::Literal(serde_json::Value::String(text)) => {
                serde_json::Value::String(render_segments(&[Segment::Literal(text.clone())]))
            }
            SettingValue::Literal(other) => other.clone(),
            SettingValue::Reference(token) => serde_json::Value::String(token.to_string()),
            SettingValue::Template(segments) => serde_json::Value::String(render_segments(segments)),
            SettingValue::Malformed { raw, .. } => serde_json::Value::String(raw.clone()),
        }
    }

    /// Reference tokens this value reads.
    pub fn references(&self) -> Vec<&ReferenceToken> {
        match self {
            SettingValue::Reference(token) => vec![token],
            SettingValue::Template(segments) => crate::reference::references(segments).collect(),
            _ => Vec::new(),
        }
    }
}

impl Serialize for SettingValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SettingValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        serde_json::Value::deserialize(deserializer).map(SettingValue::from_json)
    }
}

pub type Settings = BTreeMap<String, SettingValue>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterInstance {
    /// Field of the base action this filter narrows. `at` names the event time.
    pub field: String,
    pub filter: String,
    #[serde(default)]
    pub settings: Settings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomAction {
    pub base_action: String,
    #[serde(default)]
    pub filters: Vec<FilterInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoratorInstance {
    pub name: String,
    #[serde(default)]
    pub settings: Settings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionInstance {
    pub execution: String,
    #[serde(default)]
    pub settings: Settings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomProcedure {
    pub base_procedure: String,
    #[serde(default)]
    pub settings: Settings,
    #[serde(default)]
    pub decorators: Vec<DecoratorInstance>,
    #[serde(default)]
    pub on_pass: Vec<ExecutionInstance>,
    #[serde(default)]
    pub on_fail: Vec<ExecutionInstance>,
}

fn enabled_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyDocument {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub action: CustomAction,
    pub procedure: CustomProcedure,
    pub registry_version: u64,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

impl PolicyDocument {
    pub fn from_json(source: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(source)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("documents serialize");
        out.push('\n');
        out
    }
}
