use std::collections::BTreeMap;

use thiserror::Error;

use crate::entity::Value;
use crate::stdlib::behaviors::DecoratorBehavior;

/// Holds a proposal at Pending until its condition clears.
#[derive(Debug, Clone, PartialEq)]
pub enum Guard {
    /// Pending while less than `ms` has elapsed since the proposal opened.
    Elapsed { ms: i64 },
    /// Pending until every eligible voter has a ballot.
    AllVotes,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StartHook {
    Announce { channel: String, text: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TickHook {
    /// Close the proposal with a final evaluation once `ms` have elapsed.
    CloseAfter { ms: i64 },
    /// Direct-message every eligible non-voter once, at `ms` after opening.
    RemindNonVoters { ms: i64, text: String },
}

/// Vote-time reaction. No stdlib decorator uses one yet.
#[derive(Debug, Clone, PartialEq)]
pub enum VoteHook {}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecoratorHooks {
    pub guard: Option<Guard>,
    pub start_hook: Option<StartHook>,
    pub vote_hook: Option<VoteHook>,
    pub tick_hook: Option<TickHook>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecoratorError {
    #[error("unknown decorator `{0}`")]
    UnknownDecorator(String),
    #[error("decorator setting `{0}` is missing or malformed")]
    BadSetting(&'static str),
}

fn millis(settings: &BTreeMap<String, Value>, name: &'static str) -> Result<i64, DecoratorError> {
    settings
        .get(name)
        .and_then(Value::as_number)
        .filter(|n| *n >= 0.0)
        .map(|n| n as i64)
        .ok_or(DecoratorError::BadSetting(name))
}

fn text(settings: &BTreeMap<String, Value>, name: &'static str) -> Result<String, DecoratorError> {
    settings
        .get(name)
        .and_then(Value::as_str)
        .map(str::to_owned)
        .ok_or(DecoratorError::BadSetting(name))
}

/// Which hooks a decorator contributes, known without its settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HookKinds {
    pub guard: bool,
    pub start: bool,
    pub vote: bool,
    pub tick: bool,
}

pub fn hook_kinds(behavior: DecoratorBehavior) -> HookKinds {
    use DecoratorBehavior::*;
    let none = HookKinds::default();
    match behavior {
        Duration => HookKinds { guard: true, tick: true, ..none },
        NotifyNonVoters => HookKinds { tick: true, ..none },
        RequireAllVotes | DelayChecks => HookKinds { guard: true, ..none },
        AnnounceStart => HookKinds { start: true, ..none },
    }
}

/// Hooks contributed by a decorator, from its bound settings.
pub fn decorator_hooks(
    behavior: DecoratorBehavior,
    settings: &BTreeMap<String, Value>,
) -> Result<DecoratorHooks, DecoratorError> {
    use DecoratorBehavior::*;
    Ok(match behavior {
        Duration => {
            let ms = millis(settings, "duration")?;
            DecoratorHooks {
                guard: Some(Guard::Elapsed { ms }),
                tick_hook: Some(TickHook::CloseAfter { ms }),
                ..Default::default()
            }
        }
        NotifyNonVoters => DecoratorHooks {
            tick_hook: Some(TickHook::RemindNonVoters {
                ms: millis(settings, "offset")?,
                text: text(settings, "text")?,
            }),
            ..Default::default()
        },
        RequireAllVotes => DecoratorHooks { guard: Some(Guard::AllVotes), ..Default::default() },
        DelayChecks => DecoratorHooks {
            guard: Some(Guard::Elapsed { ms: millis(settings, "delay")? }),
            ..Default::default()
        },
        AnnounceStart => DecoratorHooks {
            start_hook: Some(StartHook::Announce {
                channel: text(settings, "channel")?,
                text: text(settings, "text")?,
            }),
            ..Default::default()
        },
    })
}

/// Looks a decorator up by its behavior identifier.
pub fn decorator_behavior(id: &str) -> Result<DecoratorBehavior, DecoratorError> {
    match crate::stdlib::behaviors::Behavior::resolve(crate::registry::ComponentKind::Decorator, id) {
        Some(crate::stdlib::behaviors::Behavior::Decorator(d)) => Ok(d),
        _ => Err(DecoratorError::UnknownDecorator(id.to_owned())),
    }
}
