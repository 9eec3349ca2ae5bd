use std::collections::BTreeMap;
use std::sync::Arc;

use pika_core::compiler::{compile, render_source, ChainLink};
use pika_core::engine::{evaluate, Engine, RawActionEvent};
use pika_core::entity::Value;
use pika_core::policy::PolicyDocument;
use pika_core::procedures::{BallotContent, Status};
use pika_core::stdlib::stdlib_registry;
use pika_core::validate::validate_policy;
use proptest::prelude::*;
use serde_json::{json, Value as Json};

use super::{community, community_json};

const USERS: [&str; 6] = ["U1", "U2", "U3", "U4", "U5", "U6"];
const CHANNELS: [&str; 3] = ["C1", "C2", "C3"];
const ROLES: [&str; 3] = ["admin", "base_user", "moderator"];
const WORDS: [&str; 5] = ["hello", "%vote", "alice", "yes", "go"];

// ---- filter conjunction ----

#[derive(Debug, Clone)]
pub enum Pred {
    HasRole(&'static str),
    UserIs(&'static str),
    NotIn(Vec<&'static str>),
    ChannelIs(&'static str),
    NamePrefix(&'static str),
    StartsWith(&'static str),
    Contains(&'static str),
    LengthAtLeast(u32),
    After(i64),
    Before(i64),
}

impl Pred {
    fn field(&self) -> &'static str {
        match self {
            Pred::HasRole(_) | Pred::UserIs(_) | Pred::NotIn(_) => "initiator",
            Pred::ChannelIs(_) | Pred::NamePrefix(_) => "channel",
            Pred::StartsWith(_) | Pred::Contains(_) | Pred::LengthAtLeast(_) => "text",
            Pred::After(_) | Pred::Before(_) => "at",
        }
    }

    fn instance(&self) -> Json {
        let (filter, settings) = match self {
            Pred::HasRole(r) => ("User.HasRole", json!({"role": r})),
            Pred::UserIs(u) => ("User.Is", json!({"user": u})),
            Pred::NotIn(us) => ("User.NotIn", json!({"users": us})),
            Pred::ChannelIs(c) => ("Channel.Is", json!({"channel": c})),
            Pred::NamePrefix(p) => ("Channel.NameStartsWith", json!({"prefix": p})),
            Pred::StartsWith(w) => ("Text.StartsWith", json!({"word": w})),
            Pred::Contains(w) => ("Text.Contains", json!({"word": w})),
            Pred::LengthAtLeast(n) => ("Text.LengthAtLeast", json!({"n": n})),
            Pred::After(t) => ("Timestamp.After", json!({"t": t})),
            Pred::Before(t) => ("Timestamp.Before", json!({"t": t})),
        };
        json!({"field": self.field(), "filter": filter, "settings": settings})
    }

    /// Direct reading of each predicate against the raw community data.
    fn holds(&self, event: &Event, community: &Json) -> bool {
        match self {
            Pred::HasRole(r) => community["users"][event.initiator]["roles"]
                .as_array()
                .is_some_and(|roles| roles.iter().any(|x| x == r)),
            Pred::UserIs(u) => event.initiator == *u,
            Pred::NotIn(us) => !us.contains(&event.initiator),
            Pred::ChannelIs(c) => event.channel == *c,
            Pred::NamePrefix(p) => community["channels"][event.channel]["name"]
                .as_str()
                .is_some_and(|name| name.starts_with(p.trim_start_matches('#'))),
            Pred::StartsWith(w) => w.is_empty() || event.text.split(' ').find(|t| !t.is_empty()) == Some(*w),
            Pred::Contains(w) => event.text.contains(w),
            Pred::LengthAtLeast(n) => event.text.chars().count() >= *n as usize,
            Pred::After(t) => event.at > *t,
            Pred::Before(t) => event.at < *t,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Event {
    initiator: &'static str,
    channel: &'static str,
    text: String,
    at: i64,
}

pub fn pred_for(field: usize) -> BoxedStrategy<Pred> {
    let user = proptest::sample::select(&USERS[..]);
    match field {
        0 => prop_oneof![
            proptest::sample::select(&ROLES[..]).prop_map(Pred::HasRole),
            user.clone().prop_map(Pred::UserIs),
            proptest::sample::subsequence(&USERS[..], 0..4).prop_map(Pred::NotIn),
        ]
        .boxed(),
        1 => prop_oneof![
            proptest::sample::select(&CHANNELS[..]).prop_map(Pred::ChannelIs),
            proptest::sample::select(&["g", "go", "#gen", "m", "x"][..]).prop_map(Pred::NamePrefix),
        ]
        .boxed(),
        2 => prop_oneof![
            proptest::sample::select(&WORDS[..]).prop_map(Pred::StartsWith),
            proptest::sample::select(&["", "o", "%vote", "yes alice"][..]).prop_map(Pred::Contains),
            (0u32..16).prop_map(Pred::LengthAtLeast),
        ]
        .boxed(),
        _ => prop_oneof![(0i64..100).prop_map(Pred::After), (0i64..100).prop_map(Pred::Before)].boxed(),
    }
}

pub fn preds() -> impl Strategy<Value = Vec<Pred>> {
    (pred_for(0).prop_map(Some).boxed().prop_union(Just(None).boxed()),
     pred_for(1).prop_map(Some).boxed().prop_union(Just(None).boxed()),
     pred_for(2).prop_map(Some).boxed().prop_union(Just(None).boxed()),
     pred_for(3).prop_map(Some).boxed().prop_union(Just(None).boxed()))
        .prop_map(|(a, b, c, d)| [a, b, c, d].into_iter().flatten().collect::<Vec<_>>())
        .prop_shuffle()
}

pub fn event() -> impl Strategy<Value = Event> {
    (
        proptest::sample::select(&USERS[..]),
        proptest::sample::select(&CHANNELS[..]),
        proptest::collection::vec(proptest::sample::select(&WORDS[..]), 0..4),
        0i64..100,
    )
        .prop_map(|(initiator, channel, words, at)| Event { initiator, channel, text: words.join(" "), at })
}

pub fn message_policy(filters: Vec<Json>, procedure: Json) -> PolicyDocument {
    serde_json::from_value(json!({
        "id": "generated", "name": "Generated", "registry_version": 1,
        "action": {"base_action": "PostMessage", "filters": filters},
        "procedure": procedure
    }))
    .unwrap()
}

/// A policy whose filters are `preds` matches exactly the events every
/// predicate holds for, and never matches another base action.
pub fn check_filters_conjoin(preds: &[Pred], event: &Event) -> Result<(), String> {
    let registry = stdlib_registry();
    let community = community();
    let doc = message_policy(preds.iter().map(Pred::instance).collect(), json!({"base_procedure": "Consensus"}));
    let plan = compile(&doc, &registry).map_err(|e| e.to_string())?;
    let fields = BTreeMap::from([
        ("initiator".to_owned(), Value::User(event.initiator.into())),
        ("channel".to_owned(), Value::Channel(event.channel.into())),
        ("text".to_owned(), Value::Text(event.text.clone())),
    ]);
    let raw = community_json();
    let expected = preds.iter().all(|p| p.holds(event, &raw));
    let matched = plan.matcher.matches("PostMessage", &fields, event.at, &community).is_some();
    if matched != expected {
        return Err(format!("{preds:?} on {event:?}: matched {matched}, expected {expected}"));
    }
    if plan.matcher.matches("RenameChannel", &fields, event.at, &community).is_some() {
        return Err(format!("{preds:?} matched another base action"));
    }
    Ok(())
}

// ---- compile succeeds iff validation is empty ----

pub fn pick(options: Vec<Json>) -> impl Strategy<Value = Json> {
    proptest::sample::select(options)
}

pub fn generated_document() -> impl Strategy<Value = Json> {
    // Valid pieces are repeated so that a fair share of documents is valid.
    let base = pick(vec![json!("PostMessage"), json!("PostMessage"), json!("PostMessage"), json!("RenameChannel"), json!("Teleport")]);
    let filter = pick(vec![
        json!({"field": "initiator", "filter": "User.HasRole", "settings": {"role": "admin"}}),
        json!({"field": "initiator", "filter": "User.HasRole", "settings": {"role": "admin"}}),
        json!({"field": "at", "filter": "Timestamp.After", "settings": {"t": 5}}),
        json!({"field": "channel", "filter": "User.HasRole", "settings": {"role": "admin"}}),
        json!({"field": "text", "filter": "Text.CommandWithUserList", "settings": {"command": "%vote"}}),
        json!({"field": "new_name", "filter": "NewName.StartsWith", "settings": {"prefix": "x"}}),
        json!({"field": "at", "filter": "Timestamp.After", "settings": {"t": 5}}),
        json!({"field": "initiator", "filter": "User.Is", "settings": {"user": 3}}),
        json!({"field": "channel", "filter": "Channel.Is", "settings": {"channel": "C3", "extra": 1}}),
        json!({"field": "channel", "filter": "Channel.Is", "settings": {"channel": "${action.channel}"}}),
    ]);
    let procedure = pick(vec![
        json!({"base_procedure": "Majority", "settings": {"threshold": 0.5}}),
        json!({"base_procedure": "Majority", "settings": {"threshold": 0.5}}),
        json!({"base_procedure": "BenevolentDictator", "settings": {"dictator": "${action.initiator}"}}),
        json!({"base_procedure": "Majority"}),
        json!({"base_procedure": "Majority", "settings": {"threshold": 1.5}}),
        json!({"base_procedure": "Jury", "settings": {"no_of_jurors": 3, "threshold": 2}}),
        json!({"base_procedure": "Consensus", "settings": {"eligible_channel": "${action.channel}"}}),
        json!({"base_procedure": "RankedVoting", "settings": {"candidates": "${action.users}"}}),
        json!({"base_procedure": "BenevolentDictator", "settings": {"dictator": "${action.initiator}"}}),
        json!({"base_procedure": "BenevolentDictator", "settings": {"dictator": "${procedure.dictator}"}}),
        json!({"base_procedure": "Nope"}),
    ]);
    let decorator = pick(vec![
        json!({"name": "Duration", "settings": {"duration": 1000}}),
        json!({"name": "RequireAllVotes"}),
        json!({"name": "Duration", "settings": {"duration": "${action.text}"}}),
        json!({"name": "NotifyNonVoters", "settings": {"text": "${procedure.yes_votes} so far", "offset": 10}}),
        json!({"name": "RequireAllVotes"}),
        json!({"name": "AnnounceStart", "settings": {"channel": "${action.channel}", "text": "hi ${action.initiator}"}}),
        json!({"name": "DelayChecks"}),
    ]);
    let execution = pick(vec![
        json!({"execution": "PostMessage", "settings": {"channel": "${action.channel}", "text": "won: ${procedure.winner}"}}),
        json!({"execution": "DirectMessage", "settings": {"user": "${action.initiator}", "text": "done"}}),
        json!({"execution": "DirectMessage", "settings": {"user": "${action.initiator}", "text": "done"}}),
        json!({"execution": "DirectMessage", "settings": {"user": "${action.initiator}", "text": "done"}}),
        json!({"execution": "GrantRole", "settings": {"user": "${procedure.winner}", "role": "admin"}}),
        json!({"execution": "InviteToChannel", "settings": {"channel": "C3", "user": "${action.new_name}"}}),
        json!({"execution": "RenameChannel", "settings": {"channel": "${action.channel}", "new_name": "${action.new_name}"}}),
        json!({"execution": "Teleport"}),
    ]);
    (
        base,
        proptest::collection::vec(filter, 0..=2),
        procedure,
        proptest::collection::vec(decorator, 0..=2),
        proptest::collection::vec(execution, 0..=2),
        proptest::sample::select(vec![1u64, 1, 1, 1, 1, 2]),
    )
        .prop_map(|(base, filters, procedure, decorators, on_pass, version)| {
            let mut procedure = procedure;
            procedure["decorators"] = json!(decorators);
            procedure["on_pass"] = json!(on_pass);
            json!({
                "id": "generated", "name": "Generated", "registry_version": version,
                "action": {"base_action": base, "filters": filters},
                "procedure": procedure
            })
        })
}

pub fn check_compile_agrees(doc: &Json) -> Result<bool, String> {
    let registry = stdlib_registry();
    let doc: PolicyDocument = serde_json::from_value(doc.clone()).map_err(|e| e.to_string())?;
    let report = validate_policy(&doc, &registry, &community().snapshot());
    let compiled = compile(&doc, &registry);
    if compiled.is_ok() != report.is_empty() {
        return Err(format!("compile {:?} but diagnostics {:?}", compiled.err(), report.codes()));
    }
    Ok(compiled.is_ok())
}

// ---- decorator chain order ----

pub fn decorator_pool() -> Vec<(&'static str, Json)> {
    vec![
        ("Duration", json!({"name": "Duration", "settings": {"duration": 1000}})),
        ("NotifyNonVoters", json!({"name": "NotifyNonVoters", "settings": {"text": "vote", "offset": 10}})),
        ("RequireAllVotes", json!({"name": "RequireAllVotes"})),
        ("DelayChecks", json!({"name": "DelayChecks", "settings": {"delay": 5}})),
        ("AnnounceStart", json!({"name": "AnnounceStart", "settings": {"channel": "C2", "text": "new vote"}})),
    ]
}

/// Every ordered choice of three decorators yields a chain, a decorator list
/// and a rendered check section in the listed order. Returns how many were
/// checked.
pub fn check_chain_orders() -> Result<usize, String> {
    let registry = stdlib_registry();
    let pool = decorator_pool();
    let mut permutations = 0;
    for a in 0..pool.len() {
        for b in 0..pool.len() {
            for c in 0..pool.len() {
                if a == b || b == c || a == c {
                    continue;
                }
                let listed = [&pool[a], &pool[b], &pool[c]];
                let doc = message_policy(
                    vec![],
                    json!({
                        "base_procedure": "Majority", "settings": {"threshold": 0.5},
                        "decorators": listed.iter().map(|(_, d)| d.clone()).collect::<Vec<_>>()
                    }),
                );
                let plan = compile(&doc, &registry).map_err(|e| e.to_string())?;
                let mut expected: Vec<ChainLink> = listed.iter().map(|(n, _)| ChainLink::Decorator(n.to_string())).collect();
                expected.push(ChainLink::Base("Majority".into()));
                if plan.procedure_chain != expected {
                    return Err(format!("chain {:?}, expected {expected:?}", plan.procedure_chain));
                }
                let names: Vec<&str> = plan.decorators.iter().map(|d| d.name.as_str()).collect();
                if names != listed.map(|(n, _)| *n) {
                    return Err(format!("decorators {names:?}"));
                }
                let check = render_source(&doc, &registry).map_err(|e| e.to_string())?.check;
                let mut positions = Vec::new();
                for link in &expected {
                    positions.push(check.find(&format!("# {link}\n")).ok_or_else(|| format!("{link} missing:\n{check}"))?);
                }
                if !positions.windows(2).all(|w| w[0] < w[1]) {
                    return Err(format!("rendered out of order:\n{check}"));
                }
                permutations += 1;
            }
        }
    }
    Ok(permutations)
}

// ---- decorator neutrality ----

pub fn rename_policy(threshold: f64, decorators: &[Json]) -> PolicyDocument {
    serde_json::from_value(json!({
        "id": "neutral", "name": "Neutral", "registry_version": 1,
        "action": {"base_action": "RenameChannel"},
        "procedure": {"base_procedure": "Majority", "settings": {"threshold": threshold, "eligible_channel": "C2"},
                      "decorators": decorators}
    }))
    .unwrap()
}

pub type NeutralityCase = (Vec<usize>, f64, BTreeMap<&'static str, bool>, i64);

pub fn neutrality_case() -> impl Strategy<Value = NeutralityCase> {
    (
        proptest::sample::subsequence((0..5usize).collect::<Vec<_>>(), 0..=5).prop_shuffle(),
        proptest::sample::select(vec![0.2, 0.4, 0.5, 0.6, 0.8, 1.0]),
        proptest::collection::btree_map(proptest::sample::select(&USERS[..5]), any::<bool>(), 0..=5),
        0i64..3000,
    )
}

/// Decorators may hold a decision back while a proposal is open but never
/// reverse it, and a closing evaluation ignores them entirely.
pub fn check_neutrality((chosen, threshold, ballots, now): &NeutralityCase) -> Result<(), String> {
    let registry = Arc::new(stdlib_registry());
    let pool = decorator_pool();
    let decorators: Vec<Json> = chosen.iter().map(|&i| pool[i].1.clone()).collect();
    let decorated = compile(&rename_policy(*threshold, &decorators), &registry).map_err(|e| e.to_string())?;
    let bare = compile(&rename_policy(*threshold, &[]), &registry).map_err(|e| e.to_string())?;

    // A far-off duration keeps the proposal open while ballots pile up.
    let holder = rename_policy(*threshold, &[json!({"name": "Duration", "settings": {"duration": 1e12}})]);
    let mut engine = Engine::new(registry.clone(), community(), 9);
    engine.add_policy(compile(&holder, &registry).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let raw: RawActionEvent = serde_json::from_value(json!({
        "kind": "RenameChannel", "fields": {"initiator": "U1", "channel": "C1", "new_name": "x"}
    }))
    .map_err(|e| e.to_string())?;
    let event = engine.parse_event(raw, 0).map_err(|e| e.to_string())?;
    engine.submit_event(event).map_err(|e| e.to_string())?;
    engine.advance_clock(*now).map_err(|e| e.to_string())?;
    for (voter, yes) in ballots {
        engine.cast_vote("p1", voter, BallotContent::YesNo(*yes)).map_err(|e| e.to_string())?;
    }
    let proposal = engine.proposal("p1").ok_or("p1 missing")?;
    for closing in [false, true] {
        let with = evaluate(&decorated, proposal, *now, engine.community(), closing)?.status;
        let without = evaluate(&bare, proposal, *now, engine.community(), closing)?.status;
        let neutral = if closing { with == without } else { with == without || with == Status::Pending };
        if !neutral {
            return Err(format!("{chosen:?} turned {without:?} into {with:?} (closing {closing})"));
        }
    }
    Ok(())
}
