//! In-memory community: users, roles, channels, messages and documents.
//!
//! Every mutation appends a [`PlatformEvent`] so that a trace audit can
//! attribute each state change to a passed-through action or an execution.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entity::{format_number, Entity, Value};
use crate::stdlib::behaviors::BaseActionBehavior;

pub type UserId = String;
pub type ChannelId = String;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct User {
    pub display_name: String,
    #[serde(default)]
    pub roles: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Channel {
    pub name: String,
    #[serde(default)]
    pub private: bool,
    #[serde(default)]
    pub members: BTreeSet<UserId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub id: String,
    pub channel: ChannelId,
    /// `None` for messages posted by the policy engine.
    pub author: Option<UserId>,
    pub text: String,
    pub at: i64,
    #[serde(default)]
    pub reactions: BTreeMap<String, BTreeSet<UserId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectMessage {
    pub to: UserId,
    pub text: String,
    pub at: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformEvent {
    pub at: i64,
    pub kind: String,
    pub detail: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlatformError {
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("unknown user `{0}`")]
    UnknownUser(String),
    #[error("unknown role `{0}`")]
    UnknownRole(String),
    #[error("unknown document `{0}`")]
    UnknownDocument(String),
    #[error("unknown message `{0}`")]
    UnknownMessage(String),
    #[error("user `{0}` already belongs to the community")]
    AlreadyMember(String),
    #[error("field `{0}` is missing or has the wrong shape")]
    BadField(String),
    #[error("clock cannot move back from {now} to {requested}")]
    ClockRegression { now: i64, requested: i64 },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommunityState {
    #[serde(default)]
    pub users: BTreeMap<UserId, User>,
    #[serde(default)]
    pub roles: BTreeSet<String>,
    #[serde(default)]
    pub channels: BTreeMap<ChannelId, Channel>,
    #[serde(default)]
    pub documents: BTreeMap<String, String>,
    #[serde(default)]
    pub messages: Vec<Message>,
    #[serde(default)]
    pub direct_messages: Vec<DirectMessage>,
    #[serde(default)]
    pub clock: i64,
    #[serde(default)]
    pub log: Vec<PlatformEvent>,
}

/// Read-only view used to validate policies and to populate drop-downs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CommunitySnapshot {
    pub users: Vec<SnapshotUser>,
    pub roles: Vec<String>,
    pub channels: Vec<SnapshotChannel>,
    pub documents: Vec<SnapshotDocument>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotUser {
    pub id: UserId,
    pub display_name: String,
    pub roles: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotChannel {
    pub id: ChannelId,
    pub name: String,
    pub private: bool,
    pub members: Vec<UserId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotDocument {
    pub id: String,
    pub text: String,
}

impl CommunitySnapshot {
    pub fn has_user(&self, id: &str) -> bool {
        self.users.iter().any(|u| u.id == id)
    }

    pub fn has_role(&self, role: &str) -> bool {
        self.roles.iter().any(|r| r == role)
    }

    pub fn has_channel(&self, id: &str) -> bool {
        self.channels.iter().any(|c| c.id == id)
    }

    pub fn has_document(&self, id: &str) -> bool {
        self.documents.iter().any(|d| d.id == id)
    }

    /// Community values a setting of this entity may take, as ids.
    pub fn values_of(&self, entity: Entity) -> Vec<String> {
        match entity {
            Entity::CommunityUser | Entity::UserList => self.users.iter().map(|u| u.id.clone()).collect(),
            Entity::CommunityRole => self.roles.clone(),
            Entity::Channel => self.channels.iter().map(|c| c.id.clone()).collect(),
            Entity::Document => self.documents.iter().map(|d| d.id.clone()).collect(),
            _ => Vec::new(),
        }
    }
}

fn field<'a>(fields: &'a BTreeMap<String, Value>, name: &str) -> Result<&'a str, PlatformError> {
    fields
        .get(name)
        .and_then(Value::as_str)
        .ok_or_else(|| PlatformError::BadField(name.to_owned()))
}

impl CommunityState {
    pub fn snapshot(&self) -> CommunitySnapshot {
        CommunitySnapshot {
            users: self
                .users
                .iter()
                .map(|(id, u)| SnapshotUser {
                    id: id.clone(),
                    display_name: u.display_name.clone(),
                    roles: u.roles.iter().cloned().collect(),
                })
                .collect(),
            roles: self.roles.iter().cloned().collect(),
            channels: self
                .channels
                .iter()
                .map(|(id, c)| SnapshotChannel {
                    id: id.clone(),
                    name: c.name.clone(),
                    private: c.private,
                    members: c.members.iter().cloned().collect(),
                })
                .collect(),
            documents: self
                .documents
                .iter()
                .map(|(id, text)| SnapshotDocument { id: id.clone(), text: text.clone() })
                .collect(),
        }
    }

    /// Checks the structural invariants of a freshly loaded community.
    pub fn check(&self) -> Result<(), PlatformError> {
        for user in self.users.values() {
            if let Some(role) = user.roles.iter().find(|r| !self.roles.contains(*r)) {
                return Err(PlatformError::UnknownRole(role.clone()));
            }
        }
        for channel in self.channels.values() {
            if let Some(member) = channel.members.iter().find(|m| !self.users.contains_key(*m)) {
                return Err(PlatformError::UnknownUser(member.clone()));
            }
        }
        Ok(())
    }

    pub fn advance_clock(&mut self, to: i64) -> Result<(), PlatformError> {
        if to < self.clock {
            return Err(PlatformError::ClockRegression { now: self.clock, requested: to });
        }
        self.clock = to;
        Ok(())
    }

    pub fn user_has_role(&self, user: &str, role: &str) -> bool {
        self.users.get(user).is_some_and(|u| u.roles.contains(role))
    }

    pub fn user_display(&self, id: &str) -> String {
        self.users.get(id).map_or_else(|| id.to_owned(), |u| u.display_name.clone())
    }

    pub fn channel_display(&self, id: &str) -> String {
        self.channels.get(id).map_or_else(|| id.to_owned(), |c| format!("#{}", c.name))
    }

    /// Resolves a display name, ignoring ASCII case.
    pub fn find_user_by_name(&self, name: &str) -> Option<&UserId> {
        self.users
            .iter()
            .find(|(_, u)| u.display_name.eq_ignore_ascii_case(name))
            .map(|(id, _)| id)
    }

    /// Users holding `role` (if given) and belonging to `channel` (if given),
    /// sorted by id.
    pub fn members_matching(&self, role: Option<&str>, channel: Option<&str>) -> Vec<UserId> {
        let channel_members = channel.map(|c| self.channels.get(c).map(|c| &c.members));
        self.users
            .iter()
            .filter(|(_, u)| role.is_none_or(|r| u.roles.contains(r)))
            .filter(|(id, _)| match channel_members {
                None => true,
                Some(None) => false,
                Some(Some(members)) => members.contains(*id),
            })
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Renders a value for inclusion in message text.
    pub fn display_value(&self, value: &Value) -> String {
        match value {
            Value::Text(s) | Value::Role(s) | Value::Document(s) => s.clone(),
            Value::Number(n) => format_number(*n),
            Value::Timestamp(t) => t.to_string(),
            Value::Boolean(b) => if *b { "yes" } else { "no" }.to_owned(),
            Value::User(id) => self.user_display(id),
            Value::Channel(id) => self.channel_display(id),
            Value::UserList(ids) => ids.iter().map(|id| self.user_display(id)).collect::<Vec<_>>().join(", "),
            Value::List(items) => items.iter().map(|v| self.display_value(v)).collect::<Vec<_>>().join(", "),
        }
    }

    fn record(&mut self, kind: &str, detail: serde_json::Value) {
        self.log.push(PlatformEvent { at: self.clock, kind: kind.to_owned(), detail });
    }

    fn channel_mut(&mut self, id: &str) -> Result<&mut Channel, PlatformError> {
        self.channels.get_mut(id).ok_or_else(|| PlatformError::UnknownChannel(id.to_owned()))
    }

    fn require_user(&self, id: &str) -> Result<(), PlatformError> {
        if self.users.contains_key(id) {
            Ok(())
        } else {
            Err(PlatformError::UnknownUser(id.to_owned()))
        }
    }

    pub fn post_message(&mut self, channel: &str, author: Option<&str>, text: &str) -> Result<String, PlatformError> {
        if !self.channels.contains_key(channel) {
            return Err(PlatformError::UnknownChannel(channel.to_owned()));
        }
        if let Some(author) = author {
            self.require_user(author)?;
        }
        let id = format!("M{}", self.messages.len() + 1);
        self.messages.push(Message {
            id: id.clone(),
            channel: channel.to_owned(),
            author: author.map(str::to_owned),
            text: text.to_owned(),
            at: self.clock,
            reactions: BTreeMap::new(),
        });
        self.record(
            "message_posted",
            serde_json::json!({"message": id, "channel": channel, "author": author, "text": text}),
        );
        Ok(id)
    }

    pub fn direct_message(&mut self, to: &str, text: &str) -> Result<(), PlatformError> {
        self.require_user(to)?;
        self.direct_messages.push(DirectMessage { to: to.to_owned(), text: text.to_owned(), at: self.clock });
        self.record("direct_message", serde_json::json!({"to": to, "text": text}));
        Ok(())
    }

    pub fn rename_channel(&mut self, channel: &str, new_name: &str) -> Result<(), PlatformError> {
        let new_name = new_name.trim_start_matches('#').to_owned();
        let ch = self.channel_mut(channel)?;
        let old = std::mem::replace(&mut ch.name, new_name.clone());
        self.record("channel_renamed", serde_json::json!({"channel": channel, "from": old, "to": new_name}));
        Ok(())
    }

    /// Adding an existing member changes nothing but is still logged.
    pub fn invite(&mut self, channel: &str, user: &str) -> Result<(), PlatformError> {
        self.require_user(user)?;
        let added = self.channel_mut(channel)?.members.insert(user.to_owned());
        self.record("channel_invite", serde_json::json!({"channel": channel, "user": user, "changed": added}));
        Ok(())
    }

    pub fn remove(&mut self, channel: &str, user: &str) -> Result<(), PlatformError> {
        self.require_user(user)?;
        let removed = self.channel_mut(channel)?.members.remove(user);
        self.record("channel_remove", serde_json::json!({"channel": channel, "user": user, "changed": removed}));
        Ok(())
    }

    pub fn grant_role(&mut self, user: &str, role: &str) -> Result<(), PlatformError> {
        if !self.roles.contains(role) {
            return Err(PlatformError::UnknownRole(role.to_owned()));
        }
        let u = self.users.get_mut(user).ok_or_else(|| PlatformError::UnknownUser(user.to_owned()))?;
        let added = u.roles.insert(role.to_owned());
        self.record("role_granted", serde_json::json!({"user": user, "role": role, "changed": added}));
        Ok(())
    }

    pub fn revoke_role(&mut self, user: &str, role: &str) -> Result<(), PlatformError> {
        if !self.roles.contains(role) {
            return Err(PlatformError::UnknownRole(role.to_owned()));
        }
        let u = self.users.get_mut(user).ok_or_else(|| PlatformError::UnknownUser(user.to_owned()))?;
        let removed = u.roles.remove(role);
        self.record("role_revoked", serde_json::json!({"user": user, "role": role, "changed": removed}));
        Ok(())
    }

    pub fn edit_document(&mut self, document: &str, text: &str) -> Result<(), PlatformError> {
        let doc = self
            .documents
            .get_mut(document)
            .ok_or_else(|| PlatformError::UnknownDocument(document.to_owned()))?;
        *doc = text.to_owned();
        self.record("document_edited", serde_json::json!({"document": document, "text": text}));
        Ok(())
    }

    pub fn create_channel(&mut self, creator: &str, name: &str) -> Result<ChannelId, PlatformError> {
        self.require_user(creator)?;
        let mut n = self.channels.len() + 1;
        while self.channels.contains_key(&format!("C{n}")) {
            n += 1;
        }
        let id = format!("C{n}");
        self.channels.insert(
            id.clone(),
            Channel {
                name: name.trim_start_matches('#').to_owned(),
                private: false,
                members: BTreeSet::from([creator.to_owned()]),
            },
        );
        self.record("channel_created", serde_json::json!({"channel": id, "name": name, "creator": creator}));
        Ok(id)
    }

    pub fn add_reaction(&mut self, user: &str, message: &str, emoji: &str) -> Result<(), PlatformError> {
        self.require_user(user)?;
        let msg = self
            .messages
            .iter_mut()
            .find(|m| m.id == message)
            .ok_or_else(|| PlatformError::UnknownMessage(message.to_owned()))?;
        msg.reactions.entry(emoji.to_owned()).or_default().insert(user.to_owned());
        self.record("reaction_added", serde_json::json!({"message": message, "user": user, "emoji": emoji}));
        Ok(())
    }

    pub fn join(&mut self, user: &str) -> Result<(), PlatformError> {
        if self.users.contains_key(user) {
            return Err(PlatformError::AlreadyMember(user.to_owned()));
        }
        self.users.insert(user.to_owned(), User { display_name: user.to_owned(), roles: BTreeSet::new() });
        self.record("user_joined", serde_json::json!({"user": user}));
        Ok(())
    }

    /// Performs a base action on the platform.
    pub fn apply_action(
        &mut self,
        action: BaseActionBehavior,
        fields: &BTreeMap<String, Value>,
    ) -> Result<(), PlatformError> {
        use BaseActionBehavior::*;
        match action {
            RenameChannel => self.rename_channel(field(fields, "channel")?, field(fields, "new_name")?),
            PostMessage => {
                let (channel, author, text) =
                    (field(fields, "channel")?, field(fields, "initiator")?, field(fields, "text")?);
                self.post_message(channel, Some(author), text).map(drop)
            }
            InviteToChannel => self.invite(field(fields, "channel")?, field(fields, "invitee")?),
            CreateChannel => self.create_channel(field(fields, "initiator")?, field(fields, "name")?).map(drop),
            AddReaction => self.add_reaction(
                field(fields, "initiator")?,
                field(fields, "message_ref")?,
                field(fields, "emoji")?,
            ),
            JoinCommunity => self.join(field(fields, "user")?),
            GrantRole => self.grant_role(field(fields, "user")?, field(fields, "role")?),
            EditDocument => self.edit_document(field(fields, "document")?, field(fields, "new_text")?),
        }
    }
}
