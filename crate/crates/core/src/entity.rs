//! Entities, value shapes and runtime values shared by every policy component.

use std::fmt;

use serde::{Deserialize, Serialize, Serializer};

/// Semantic category of a setting or variable.
///
/// Entities drive both type checking of policies and the choice of input
/// widget in an authoring form (a `Channel` setting becomes a drop-down of
/// community channels and compatible variables).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Entity {
    CommunityUser,
    CommunityRole,
    Channel,
    Text,
    Timestamp,
    Number,
    Boolean,
    Document,
    UserList,
}

impl Entity {
    pub const ALL: [Entity; 9] = [
        Entity::CommunityUser,
        Entity::CommunityRole,
        Entity::Channel,
        Entity::Text,
        Entity::Timestamp,
        Entity::Number,
        Entity::Boolean,
        Entity::Document,
        Entity::UserList,
    ];

    /// Entities whose literal values are community ids checked against a snapshot.
    pub fn is_community_ref(self) -> bool {
        matches!(
            self,
            Entity::CommunityUser
                | Entity::CommunityRole
                | Entity::Channel
                | Entity::Document
                | Entity::UserList
        )
    }
}

impl fmt::Display for Entity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    #[default]
    Scalar,
    List,
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueType::Scalar => f.write_str("scalar"),
            ValueType::List => f.write_str("list"),
        }
    }
}

/// A resolved runtime value held in a slot or a bound setting.
///
/// Community references are stored as stable ids; display names are looked up
/// only when a value is rendered into text.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Text(String),
    Number(f64),
    Boolean(bool),
    Timestamp(i64),
    User(String),
    Role(String),
    Channel(String),
    Document(String),
    UserList(Vec<String>),
    List(Vec<Value>),
}

impl Value {
    /// Interprets a raw JSON literal as a value of the given entity and shape.
    pub fn from_literal(
        entity: Entity,
        value_type: ValueType,
        raw: &serde_json::Value,
    ) -> Result<Value, String> {
        if entity == Entity::UserList {
            let items = raw
                .as_array()
                .ok_or_else(|| format!("expected a list of user ids, got {raw}"))?;
            let ids = items
                .iter()
                .map(|item| {
                    item.as_str()
                        .map(str::to_owned)
                        .ok_or_else(|| format!("expected a user id, got {item}"))
                })
                .collect::<Result<Vec<_>, _>>()?;
            return Ok(Value::UserList(ids));
        }
        match value_type {
            ValueType::Scalar => Self::scalar(entity, raw),
            ValueType::List => {
                let items = raw
                    .as_array()
                    .ok_or_else(|| format!("expected a list, got {raw}"))?;
                items
                    .iter()
                    .map(|item| Self::scalar(entity, item))
                    .collect::<Result<Vec<_>, _>>()
                    .map(Value::List)
            }
        }
    }

    fn scalar(entity: Entity, raw: &serde_json::Value) -> Result<Value, String> {
        let text = || {
            raw.as_str()
                .map(str::to_owned)
                .ok_or_else(|| format!("expected a string for {entity}, got {raw}"))
        };
        match entity {
            Entity::Text => text().map(Value::Text),
            Entity::CommunityUser => text().map(Value::User),
            Entity::CommunityRole => text().map(Value::Role),
            Entity::Channel => text().map(Value::Channel),
            Entity::Document => text().map(Value::Document),
            Entity::Number => raw
                .as_f64()
                .filter(|n| n.is_finite())
                .map(Value::Number)
                .ok_or_else(|| format!("expected a number, got {raw}")),
            Entity::Timestamp => raw
                .as_i64()
                .map(Value::Timestamp)
                .ok_or_else(|| format!("expected an integer timestamp in ms, got {raw}")),
            Entity::Boolean => raw
                .as_bool()
                .map(Value::Boolean)
                .ok_or_else(|| format!("expected a boolean, got {raw}")),
            Entity::UserList => unreachable!("handled by from_literal"),
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s)
            | Value::User(s)
            | Value::Role(s)
            | Value::Channel(s)
            | Value::Document(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Number(n) => Some(*n),
            Value::Timestamp(t) => Some(*t as f64),
            _ => None,
        }
    }

    pub fn as_timestamp(&self) -> Option<i64> {
        match self {
            Value::Timestamp(t) => Some(*t),
            Value::Number(n) if n.fract() == 0.0 => Some(*n as i64),
            _ => None,
        }
    }

    pub fn as_user_list(&self) -> Option<&[String]> {
        match self {
            Value::UserList(users) => Some(users),
            _ => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("values always serialize")
    }
}

/// Formats a number the way it appears in messages: integral values without a
/// fractional part.
pub fn format_number(n: f64) -> String {
    if n.fract() == 0.0 && n.abs() < 9.0e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Value::Text(s)
            | Value::User(s)
            | Value::Role(s)
            | Value::Channel(s)
            | Value::Document(s) => serializer.serialize_str(s),
            Value::Number(n) if n.fract() == 0.0 && n.abs() < 9.0e15 => {
                serializer.serialize_i64(*n as i64)
            }
            Value::Number(n) => serializer.serialize_f64(*n),
            Value::Boolean(b) => serializer.serialize_bool(*b),
            Value::Timestamp(t) => serializer.serialize_i64(*t),
            Value::UserList(users) => users.serialize(serializer),
            Value::List(items) => items.serialize(serializer),
        }
    }
}
