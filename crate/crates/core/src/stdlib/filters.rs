use std::collections::{BTreeMap, BTreeSet};

use crate::entity::Value;
use crate::platform::{CommunityState, UserId};
use crate::stdlib::behaviors::FilterBehavior;

/// Result of applying one filter to one action field.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterOutcome {
    pub matched: bool,
    /// Variables the filter exports on a match.
    pub exports: BTreeMap<String, Value>,
}

impl FilterOutcome {
    fn from_bool(matched: bool) -> Self {
        Self { matched, exports: BTreeMap::new() }
    }
}

/// Matches `command name, name, ...` where every name is a distinct community
/// member. Returns the members' ids in listed order.
pub fn filter_command_with_user_list(text: &str, command: &str, community: &CommunityState) -> Option<Vec<UserId>> {
    let (head, rest) = text.trim().split_once(char::is_whitespace)?;
    if command.is_empty() || head != command {
        return None;
    }
    let mut seen = BTreeSet::new();
    let mut users = Vec::new();
    for name in rest.split(',') {
        let name = name.trim();
        if name.is_empty() {
            return None;
        }
        let id = community.find_user_by_name(name)?;
        if !seen.insert(id.clone()) {
            return None;
        }
        users.push(id.clone());
    }
    Some(users)
}

/// The first whitespace-delimited token equals `word`. An empty word matches
/// every text.
pub fn filter_text_starts_with(text: &str, word: &str) -> bool {
    word.is_empty() || text.split_whitespace().next() == Some(word)
}

fn text_setting<'a>(settings: &'a BTreeMap<String, Value>, name: &str) -> Option<&'a str> {
    settings.get(name).and_then(Value::as_str)
}

/// Applies a filter behavior to the value of the field it specializes.
/// Missing or ill-shaped inputs never match.
pub fn apply_filter(
    behavior: FilterBehavior,
    field: &Value,
    settings: &BTreeMap<String, Value>,
    community: &CommunityState,
) -> FilterOutcome {
    use FilterBehavior::*;
    let field_str = field.as_str();
    let matched = match behavior {
        UserHasRole => field_str
            .zip(text_setting(settings, "role"))
            .is_some_and(|(user, role)| community.user_has_role(user, role)),
        UserIs => field_str.is_some_and(|u| text_setting(settings, "user") == Some(u)),
        UserNotIn => match (field_str, settings.get("users").and_then(Value::as_user_list)) {
            (Some(user), Some(list)) => !list.iter().any(|u| u == user),
            _ => false,
        },
        ChannelIs => field_str.is_some_and(|c| text_setting(settings, "channel") == Some(c)),
        ChannelNameStartsWith => match (field_str.and_then(|c| community.channels.get(c)), text_setting(settings, "prefix")) {
            (Some(channel), Some(prefix)) => channel.name.starts_with(prefix.trim_start_matches('#')),
            _ => false,
        },
        TextStartsWith => field_str
            .zip(text_setting(settings, "word"))
            .is_some_and(|(text, word)| filter_text_starts_with(text, word)),
        TextContains => field_str
            .zip(text_setting(settings, "word"))
            .is_some_and(|(text, word)| text.contains(word)),
        TextCommandWithUserList => {
            let users = field_str
                .zip(text_setting(settings, "command"))
                .and_then(|(text, command)| filter_command_with_user_list(text, command, community));
            return match users {
                Some(users) => FilterOutcome {
                    matched: true,
                    exports: BTreeMap::from([("users".to_owned(), Value::UserList(users))]),
                },
                None => FilterOutcome::default(),
            };
        }
        TextLengthAtLeast => match (field_str, settings.get("n").and_then(Value::as_number)) {
            (Some(text), Some(n)) => text.chars().count() as f64 >= n,
            _ => false,
        },
        TimestampAfter => match (field.as_timestamp(), settings.get("t").and_then(Value::as_timestamp)) {
            (Some(at), Some(t)) => at > t,
            _ => false,
        },
        TimestampBefore => match (field.as_timestamp(), settings.get("t").and_then(Value::as_timestamp)) {
            (Some(at), Some(t)) => at < t,
            _ => false,
        },
        NewNameStartsWith => field_str
            .zip(text_setting(settings, "prefix"))
            .is_some_and(|(name, prefix)| name.starts_with(prefix)),
        EmojiIs => field_str.is_some_and(|e| text_setting(settings, "emoji") == Some(e)),
        RoleIs => field_str.is_some_and(|r| text_setting(settings, "role") == Some(r)),
        DocumentIs => field_str.is_some_and(|d| text_setting(settings, "document") == Some(d)),
    };
    FilterOutcome::from_bool(matched)
}
