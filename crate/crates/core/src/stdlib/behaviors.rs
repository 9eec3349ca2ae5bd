//! Built-in behaviors that library components bind to by identifier.
//!
//! Each behavior carries a contract: the settings it reads and the variables
//! it produces. The registry refuses to load a descriptor whose declared
//! settings or variables disagree with the contract of its behavior.

use crate::entity::{Entity, ValueType};
use crate::registry::ComponentKind;

use Entity::*;
use ValueType::{List, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BaseActionBehavior {
    RenameChannel,
    PostMessage,
    InviteToChannel,
    CreateChannel,
    AddReaction,
    JoinCommunity,
    GrantRole,
    EditDocument,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterBehavior {
    UserHasRole,
    UserIs,
    UserNotIn,
    ChannelIs,
    ChannelNameStartsWith,
    TextStartsWith,
    TextContains,
    TextCommandWithUserList,
    TextLengthAtLeast,
    TimestampAfter,
    TimestampBefore,
    NewNameStartsWith,
    EmojiIs,
    RoleIs,
    DocumentIs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProcedureBehavior {
    Consensus,
    Majority,
    Jury,
    BenevolentDictator,
    RankedVoting,
    QuadraticVoting,
    LiquidDemocracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DecoratorBehavior {
    Duration,
    NotifyNonVoters,
    RequireAllVotes,
    DelayChecks,
    AnnounceStart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExecutionBehavior {
    PostMessage,
    DirectMessage,
    RenameChannel,
    InviteToChannel,
    RemoveFromChannel,
    GrantRole,
    RevokeRole,
    EditDocument,
    MentionUsers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Behavior {
    BaseAction(BaseActionBehavior),
    Filter(FilterBehavior),
    Procedure(ProcedureBehavior),
    Decorator(DecoratorBehavior),
    Execution(ExecutionBehavior),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotContract {
    pub name: &'static str,
    pub entity: Entity,
    pub value_type: ValueType,
    /// For settings: the behavior cannot run without a value.
    pub required: bool,
}

macro_rules! slots {
    ($($slot:expr),* $(,)?) => {{
        const SLOTS: &[SlotContract] = &[$($slot),*];
        SLOTS
    }};
}

const fn req(name: &'static str, entity: Entity) -> SlotContract {
    SlotContract { name, entity, value_type: Scalar, required: true }
}

const fn opt(name: &'static str, entity: Entity) -> SlotContract {
    SlotContract { name, entity, value_type: Scalar, required: false }
}

const fn list(name: &'static str, entity: Entity) -> SlotContract {
    SlotContract { name, entity, value_type: List, required: true }
}

#[derive(Debug, Clone, Copy)]
pub struct Contract {
    pub settings: &'static [SlotContract],
    pub variables: &'static [SlotContract],
    pub applies_to: Option<Entity>,
}

const ELIGIBILITY: [SlotContract; 2] = [opt("eligible_role", CommunityRole), opt("eligible_channel", Channel)];
const YES_NO_OUT: [SlotContract; 3] = [req("yes_votes", Number), req("no_votes", Number), list("voters", UserList)];

impl Behavior {
    /// Resolves a behavior identifier for a component kind.
    pub fn resolve(kind: ComponentKind, id: &str) -> Option<Behavior> {
        use BaseActionBehavior as A;
        use DecoratorBehavior as D;
        use ExecutionBehavior as E;
        use FilterBehavior as F;
        use ProcedureBehavior as P;
        Some(match kind {
            ComponentKind::BaseAction => Behavior::BaseAction(match id {
                "rename_channel" => A::RenameChannel,
                "post_message" => A::PostMessage,
                "invite_to_channel" => A::InviteToChannel,
                "create_channel" => A::CreateChannel,
                "add_reaction" => A::AddReaction,
                "join_community" => A::JoinCommunity,
                "grant_role" => A::GrantRole,
                "edit_document" => A::EditDocument,
                _ => return None,
            }),
            ComponentKind::Filter => Behavior::Filter(match id {
                "user_has_role" => F::UserHasRole,
                "user_is" => F::UserIs,
                "user_not_in" => F::UserNotIn,
                "channel_is" => F::ChannelIs,
                "channel_name_starts_with" => F::ChannelNameStartsWith,
                "text_starts_with" => F::TextStartsWith,
                "text_contains" => F::TextContains,
                "text_command_with_user_list" => F::TextCommandWithUserList,
                "text_length_at_least" => F::TextLengthAtLeast,
                "timestamp_after" => F::TimestampAfter,
                "timestamp_before" => F::TimestampBefore,
                "new_name_starts_with" => F::NewNameStartsWith,
                "emoji_is" => F::EmojiIs,
                "role_is" => F::RoleIs,
                "document_is" => F::DocumentIs,
                _ => return None,
            }),
            ComponentKind::BaseProcedure => Behavior::Procedure(match id {
                "consensus" => P::Consensus,
                "majority" => P::Majority,
                "jury" => P::Jury,
                "benevolent_dictator" => P::BenevolentDictator,
                "ranked_voting" => P::RankedVoting,
                "quadratic_voting" => P::QuadraticVoting,
                "liquid_democracy" => P::LiquidDemocracy,
                _ => return None,
            }),
            ComponentKind::Decorator => Behavior::Decorator(match id {
                "duration" => D::Duration,
                "notify_non_voters" => D::NotifyNonVoters,
                "require_all_votes" => D::RequireAllVotes,
                "delay_checks" => D::DelayChecks,
                "announce_start" => D::AnnounceStart,
                _ => return None,
            }),
            ComponentKind::Execution => Behavior::Execution(match id {
                "post_message" => E::PostMessage,
                "direct_message" => E::DirectMessage,
                "rename_channel" => E::RenameChannel,
                "invite_to_channel" => E::InviteToChannel,
                "remove_from_channel" => E::RemoveFromChannel,
                "grant_role" => E::GrantRole,
                "revoke_role" => E::RevokeRole,
                "edit_document" => E::EditDocument,
                "mention_users" => E::MentionUsers,
                _ => return None,
            }),
        })
    }

    pub fn contract(self) -> Contract {
        match self {
            Behavior::BaseAction(b) => Contract { settings: &[], variables: b.fields(), applies_to: None },
            Behavior::Filter(f) => f.contract(),
            Behavior::Procedure(p) => p.contract(),
            Behavior::Decorator(d) => Contract { settings: d.settings(), variables: &[], applies_to: None },
            Behavior::Execution(e) => Contract { settings: e.settings(), variables: &[], applies_to: None },
        }
    }
}

impl BaseActionBehavior {
    /// Declared fields of the action, in declaration order.
    pub fn fields(self) -> &'static [SlotContract] {
        use BaseActionBehavior::*;
        match self {
            RenameChannel => slots![req("initiator", CommunityUser), req("channel", Channel), req("new_name", Text)],
            PostMessage => slots![req("initiator", CommunityUser), req("channel", Channel), req("text", Text)],
            InviteToChannel => slots![req("initiator", CommunityUser), req("channel", Channel), req("invitee", CommunityUser)],
            CreateChannel => slots![req("initiator", CommunityUser), req("name", Text)],
            AddReaction => slots![
                req("initiator", CommunityUser),
                req("channel", Channel),
                req("message_ref", Text),
                req("emoji", Text),
            ],
            JoinCommunity => slots![req("user", CommunityUser)],
            GrantRole => slots![req("initiator", CommunityUser), req("user", CommunityUser), req("role", CommunityRole)],
            EditDocument => slots![req("initiator", CommunityUser), req("document", Document), req("new_text", Text)],
        }
    }
}

impl FilterBehavior {
    fn contract(self) -> Contract {
        use FilterBehavior::*;
        let (applies_to, settings): (Entity, &'static [SlotContract]) = match self {
            UserHasRole => (CommunityUser, slots![req("role", CommunityRole)]),
            UserIs => (CommunityUser, slots![req("user", CommunityUser)]),
            UserNotIn => (CommunityUser, slots![list("users", UserList)]),
            ChannelIs => (Channel, slots![req("channel", Channel)]),
            ChannelNameStartsWith => (Channel, slots![req("prefix", Text)]),
            TextStartsWith => (Text, slots![req("word", Text)]),
            TextContains => (Text, slots![req("word", Text)]),
            TextCommandWithUserList => (Text, slots![req("command", Text)]),
            TextLengthAtLeast => (Text, slots![req("n", Number)]),
            TimestampAfter | TimestampBefore => (Timestamp, slots![req("t", Timestamp)]),
            NewNameStartsWith => (Text, slots![req("prefix", Text)]),
            EmojiIs => (Text, slots![req("emoji", Text)]),
            RoleIs => (CommunityRole, slots![req("role", CommunityRole)]),
            DocumentIs => (Document, slots![req("document", Document)]),
        };
        let variables: &'static [SlotContract] = match self {
            TextCommandWithUserList => slots![list("users", UserList)],
            _ => &[],
        };
        Contract { settings, variables, applies_to: Some(applies_to) }
    }
}

impl ProcedureBehavior {
    fn contract(self) -> Contract {
        use ProcedureBehavior::*;
        const MAJORITY: [SlotContract; 3] = [req("threshold", Number), ELIGIBILITY[0], ELIGIBILITY[1]];
        const JURY_SETTINGS: [SlotContract; 5] = [
            req("no_of_jurors", Number),
            req("threshold", Number),
            ELIGIBILITY[0],
            ELIGIBILITY[1],
            opt("vote_channel", Channel),
        ];
        const JURY_OUT: [SlotContract; 3] = [list("jurors", UserList), req("yes_votes", Number), req("no_votes", Number)];
        const RANKED: [SlotContract; 3] = [list("candidates", UserList), ELIGIBILITY[0], ELIGIBILITY[1]];
        const QUADRATIC: [SlotContract; 3] = [req("budget", Number), ELIGIBILITY[0], ELIGIBILITY[1]];
        let (settings, variables): (&'static [SlotContract], &'static [SlotContract]) = match self {
            Consensus => (&ELIGIBILITY, &YES_NO_OUT),
            Majority => (&MAJORITY, &YES_NO_OUT),
            Jury => (&JURY_SETTINGS, &JURY_OUT),
            BenevolentDictator => (slots![req("dictator", CommunityUser)], slots![req("approved", Boolean)]),
            RankedVoting => (&RANKED, slots![req("winner", CommunityUser), req("rounds", Number)]),
            QuadraticVoting => (&QUADRATIC, slots![req("net_support", Number), req("credits_spent", Number)]),
            LiquidDemocracy => (
                &ELIGIBILITY,
                slots![req("yes_weight", Number), req("no_weight", Number), req("discarded_weight", Number)],
            ),
        };
        Contract { settings, variables, applies_to: None }
    }
}

impl DecoratorBehavior {
    fn settings(self) -> &'static [SlotContract] {
        use DecoratorBehavior::*;
        match self {
            Duration => slots![req("duration", Number)],
            NotifyNonVoters => slots![req("text", Text), req("offset", Number)],
            RequireAllVotes => &[],
            DelayChecks => slots![req("delay", Number)],
            AnnounceStart => slots![req("channel", Channel), req("text", Text)],
        }
    }
}

impl ExecutionBehavior {
    fn settings(self) -> &'static [SlotContract] {
        use ExecutionBehavior::*;
        match self {
            PostMessage => slots![req("channel", Channel), req("text", Text)],
            DirectMessage => slots![req("user", CommunityUser), req("text", Text)],
            RenameChannel => slots![req("channel", Channel), req("new_name", Text)],
            InviteToChannel | RemoveFromChannel => slots![req("channel", Channel), req("user", CommunityUser)],
            GrantRole | RevokeRole => slots![req("user", CommunityUser), req("role", CommunityRole)],
            EditDocument => slots![req("document", Document), req("text", Text)],
            MentionUsers => slots![req("channel", Channel), list("users", UserList)],
        }
    }
}
