use std::collections::BTreeMap;

use thiserror::Error;

use crate::entity::Value;
use crate::platform::{CommunityState, PlatformError};
use crate::reference::ReferenceToken;
use crate::stdlib::behaviors::ExecutionBehavior;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecutionError {
    #[error(transparent)]
    Platform(#[from] PlatformError),
    #[error("slot {0} has no value yet")]
    UnfilledSlot(ReferenceToken),
    #[error("setting `{0}` is missing or malformed")]
    BadSetting(String),
}

/// What an execution left behind on the platform.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExecutionOutcome {
    pub message_id: Option<String>,
}

fn get<'a>(settings: &'a BTreeMap<String, Value>, name: &str) -> Result<&'a str, ExecutionError> {
    settings
        .get(name)
        .and_then(Value::as_str)
        .ok_or_else(|| ExecutionError::BadSetting(name.to_owned()))
}

/// Performs an execution with fully bound settings.
pub fn apply_execution(
    behavior: ExecutionBehavior,
    settings: &BTreeMap<String, Value>,
    community: &mut CommunityState,
) -> Result<ExecutionOutcome, ExecutionError> {
    use ExecutionBehavior::*;
    let mut outcome = ExecutionOutcome::default();
    match behavior {
        PostMessage => {
            let id = community.post_message(get(settings, "channel")?, None, get(settings, "text")?)?;
            outcome.message_id = Some(id);
        }
        DirectMessage => community.direct_message(get(settings, "user")?, get(settings, "text")?)?,
        RenameChannel => community.rename_channel(get(settings, "channel")?, get(settings, "new_name")?)?,
        InviteToChannel => community.invite(get(settings, "channel")?, get(settings, "user")?)?,
        RemoveFromChannel => community.remove(get(settings, "channel")?, get(settings, "user")?)?,
        GrantRole => community.grant_role(get(settings, "user")?, get(settings, "role")?)?,
        RevokeRole => community.revoke_role(get(settings, "user")?, get(settings, "role")?)?,
        EditDocument => community.edit_document(get(settings, "document")?, get(settings, "text")?)?,
        MentionUsers => {
            let users = settings
                .get("users")
                .and_then(Value::as_user_list)
                .ok_or_else(|| ExecutionError::BadSetting("users".into()))?;
            if let Some(missing) = users.iter().find(|u| !community.users.contains_key(*u)) {
                return Err(PlatformError::UnknownUser(missing.clone()).into());
            }
            let text = users
                .iter()
                .map(|u| format!("@{}", community.user_display(u)))
                .collect::<Vec<_>>()
                .join(" ");
            outcome.message_id = Some(community.post_message(get(settings, "channel")?, None, &text)?);
        }
    }
    Ok(outcome)
}
