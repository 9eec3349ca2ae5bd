//! The `${scope.name}` reference grammar used inside setting values.
//!
//! A reference names a setting or variable of either the custom action
//! (`action`) or the custom procedure (`procedure`). `$$` escapes a literal
//! dollar sign; a `$` that does not start `${` or `$$` is kept as text.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Action,
    Procedure,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Action => "action",
            Scope::Procedure => "procedure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReferenceToken {
    pub scope: Scope,
    pub name: String,
}

impl ReferenceToken {
    pub fn new(scope: Scope, name: impl Into<String>) -> Self {
        Self { scope, name: name.into() }
    }

    pub fn action(name: impl Into<String>) -> Self {
        Self::new(Scope::Action, name)
    }

    pub fn procedure(name: impl Into<String>) -> Self {
        Self::new(Scope::Procedure, name)
    }
}

impl fmt::Display for ReferenceToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${{{}.{}}}", self.scope.as_str(), self.name)
    }
}

impl Serialize for ReferenceToken {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    Reference(ReferenceToken),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReferenceError {
    #[error("unterminated reference starting at byte {0}")]
    UnterminatedReference(usize),
    #[error("reference scope `{0}` is not `action` or `procedure`")]
    BadScope(String),
    #[error("`{0}` is not a valid identifier")]
    BadIdentifier(String),
}

/// `[a-z][a-z0-9_]*`
pub fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_'))
}

/// Splits text into literal runs and reference tokens.
pub fn parse_reference_text(text: &str) -> Result<Vec<Segment>, ReferenceError> {
    let mut segments = Vec::new();
    let mut literal = String::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < text.len() {
        if bytes[i] == b'$' {
            match bytes.get(i + 1) {
                Some(b'$') => {
                    literal.push('$');
                    i += 2;
                    continue;
                }
                Some(b'{') => {
                    let close = text[i + 2..]
                        .find('}')
                        .ok_or(ReferenceError::UnterminatedReference(i))?;
                    let body = &text[i + 2..i + 2 + close];
                    let token = parse_token(body)?;
                    if !literal.is_empty() {
                        segments.push(Segment::Literal(std::mem::take(&mut literal)));
                    }
                    segments.push(Segment::Reference(token));
                    i += close + 3;
                    continue;
                }
                _ => {}
            }
        }
        let ch = text[i..].chars().next().expect("in bounds");
        literal.push(ch);
        i += ch.len_utf8();
    }
    if !literal.is_empty() {
        segments.push(Segment::Literal(literal));
    }
    Ok(segments)
}

fn parse_token(body: &str) -> Result<ReferenceToken, ReferenceError> {
    let (scope, name) = body
        .split_once('.')
        .ok_or_else(|| ReferenceError::BadScope(body.to_owned()))?;
    let scope = match scope {
        "action" => Scope::Action,
        "procedure" => Scope::Procedure,
        other => return Err(ReferenceError::BadScope(other.to_owned())),
    };
    if !is_identifier(name) {
        return Err(ReferenceError::BadIdentifier(name.to_owned()));
    }
    Ok(ReferenceToken::new(scope, name))
}

/// Inverse of [`parse_reference_text`]. A `$` is escaped only where leaving it
/// bare would change how the text parses.
pub fn render_segments(segments: &[Segment]) -> String {
    let mut out = String::new();
    for (idx, segment) in segments.iter().enumerate() {
        match segment {
            Segment::Reference(token) => out.push_str(&token.to_string()),
            Segment::Literal(text) => {
                let followed = idx + 1 < segments.len();
                let mut chars = text.chars().peekable();
                while let Some(c) = chars.next() {
                    out.push(c);
                    if c == '$' {
                        let escape = match chars.peek() {
                            Some('$') | Some('{') => true,
                            Some(_) => false,
                            None => followed,
                        };
                        if escape {
                            out.push('$');
                        }
                    }
                }
            }
        }
    }
    out
}

/// Iterates the reference tokens of a segment list.
pub fn references(segments: &[Segment]) -> impl Iterator<Item = &ReferenceToken> {
    segments.iter().filter_map(|s| match s {
        Segment::Reference(t) => Some(t),
        Segment::Literal(_) => None,
    })
}
