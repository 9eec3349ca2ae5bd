use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use pika_core::compiler::{compile, ExecutablePolicy};
use pika_core::engine::{Effect, ProposalStatus};
use pika_core::policy::PolicyDocument;
use pika_core::scenario::{run_scenario, ScenarioRun, ScenarioScript};
use pika_core::stdlib::stdlib_registry;
use proptest::prelude::*;
use serde_json::{json, Value as Json};

use super::community_json;

pub fn policies(order: &[usize]) -> Vec<ExecutablePolicy> {
    let registry = stdlib_registry();
    let mut docs: Vec<PolicyDocument> = [
        include_str!("../../fixtures/jury_rename_policy.json"),
        include_str!("../../fixtures/consensus_invite_policy.json"),
        include_str!("../../fixtures/admin_election_policy.json"),
    ]
    .iter()
    .map(|s| PolicyDocument::from_json(s).unwrap())
    .collect();
    docs.push(
        serde_json::from_value(json!({
            "id": "slow_majority", "name": "Slow majority", "registry_version": 1,
            "action": {"base_action": "RenameChannel"},
            "procedure": {
                "base_procedure": "Majority", "settings": {"threshold": 0.5, "eligible_channel": "C2"},
                "decorators": [
                    {"name": "AnnounceStart", "settings": {"channel": "C2", "text": "Rename ${action.channel}?"}},
                    {"name": "Duration", "settings": {"duration": 5000}},
                    {"name": "NotifyNonVoters", "settings": {"text": "vote please", "offset": 2000}}
                ],
                "on_fail": [{"execution": "PostMessage", "settings": {"channel": "C2", "text": "${procedure.no_votes} said no"}}]
            }
        }))
        .unwrap(),
    );
    order.iter().map(|&i| compile(&docs[i], &registry).unwrap()).collect()
}

pub const USERS: [&str; 6] = ["U1", "U2", "U3", "U4", "U5", "U6"];

pub fn command() -> impl Strategy<Value = Json> {
    let user = || proptest::sample::select(&USERS[..]);
    prop_oneof![
        (user(), proptest::sample::select(&["C1", "C2", "C3"][..]), "[a-z]{1,6}").prop_map(|(u, c, n)| {
            json!({"action": {"kind": "RenameChannel", "fields": {"initiator": u, "channel": c, "new_name": n}}})
        }),
        (user(), user()).prop_map(|(u, v)| {
            json!({"action": {"kind": "InviteToChannel", "fields": {"initiator": u, "channel": "C3", "invitee": v}}})
        }),
        (user(), proptest::sample::select(&["%voteadmin alice, bob, carol", "%voteadmin bob, dave", "hello"][..]))
            .prop_map(|(u, t)| json!({"action": {"kind": "PostMessage", "fields": {"initiator": u, "channel": "C2", "text": t}}})),
        (user(), 1u8..5, any::<bool>()).prop_map(|(u, m, up)| {
            json!({"action": {"kind": "AddReaction", "fields": {
                "initiator": u, "channel": "C2", "message_ref": format!("M{m}"), "emoji": if up { "👍" } else { "👎" }
            }}})
        }),
        (user(), any::<bool>()).prop_map(|(u, b)| json!({"vote": {"proposal": "p1", "voter": u, "ballot": b}})),
        (user(), Just(["U1", "U2", "U3"]).prop_shuffle())
            .prop_map(|(u, r)| json!({"vote": {"proposal": "p1", "voter": u, "ballot": {"ranking": r}}})),
        Just(json!("tick")),
    ]
}

pub fn script() -> impl Strategy<Value = ScenarioScript> {
    (any::<u64>(), proptest::collection::vec((command(), 0i64..1500), 0..25)).prop_map(|(seed, steps)| {
        let mut at = 0;
        let mut out = vec![json!({"at": 0, "do": {"action": {"kind": "RenameChannel",
            "fields": {"initiator": "U1", "channel": "C1", "new_name": "first"}}}})];
        for (command, gap) in steps {
            at += gap;
            out.push(json!({"at": at, "do": command}));
        }
        let initial = community_json();
        serde_json::from_value(json!({"seed": seed, "initial": initial, "steps": out})).unwrap()
    })
}

pub fn run(script: &ScenarioScript, order: &[usize]) -> ScenarioRun {
    run_scenario(script, &policies(order), Arc::new(stdlib_registry())).unwrap()
}

pub fn audit(run: &ScenarioRun) -> Result<(), String> {
    let mut governed: BTreeMap<&str, &str> = BTreeMap::new();
    let mut closed: BTreeMap<&str, ProposalStatus> = BTreeMap::new();
    let mut applied: BTreeSet<&str> = BTreeSet::new();
    let mut mutations = 0usize;
    for record in &run.trace {
        match &record.effect {
            Effect::ProposalOpened { proposal, event_id, .. } => {
                governed.insert(proposal, event_id);
            }
            Effect::ProposalClosed { proposal, status, .. } => {
                if closed.insert(proposal, *status).is_some() {
                    return Err(format!("{proposal} closed twice"));
                }
            }
            Effect::VoteRecorded { proposal, .. } if closed.contains_key(proposal.as_str()) => {
                return Err(format!("vote recorded on closed {proposal}"));
            }
            Effect::ActionApplied { proposal, .. } | Effect::ActionFailed { proposal: Some(proposal), .. } => {
                if closed.get(proposal.as_str()) != Some(&ProposalStatus::Passed) {
                    return Err(format!("{proposal} applied without passing"));
                }
                if let Effect::ActionApplied { .. } = record.effect {
                    mutations += 1;
                }
                applied.insert(proposal);
            }
            Effect::ActionPassedThrough { event_id, .. } => {
                if governed.values().any(|e| e == event_id) {
                    return Err(format!("governed {event_id} passed through"));
                }
                mutations += 1;
            }
            Effect::ActionFailed { proposal: None, .. } => mutations -= 1,
            Effect::ExecutionRequest { .. } => mutations += 1,
            _ => {}
        }
    }
    for (proposal, status) in &closed {
        if (*status == ProposalStatus::Passed) != applied.contains(proposal) {
            return Err(format!("{proposal} is {status:?} but applied = {}", applied.contains(proposal)));
        }
    }
    for p in &run.proposals {
        if (p.status == ProposalStatus::Open) == closed.contains_key(p.proposal_id.as_str()) {
            return Err(format!("{} status {:?} disagrees with trace", p.proposal_id, p.status));
        }
    }
    if mutations != run.state.log.len() {
        return Err(format!("{} platform changes but {} attributable effects", run.state.log.len(), mutations));
    }
    let seqs: Vec<u64> = run.trace.iter().map(|r| r.seq).collect();
    if seqs != (1..=seqs.len() as u64).collect::<Vec<_>>() || !run.trace.windows(2).all(|w| w[0].at <= w[1].at) {
        return Err("trace out of order".into());
    }
    Ok(())
}

/// Runs a script twice under the given policy order, audits the first run
/// and requires the second to reproduce it exactly.
pub fn check_random_run(script: &ScenarioScript, order: &[usize]) -> Result<(), String> {
    let first = run(script, order);
    audit(&first).map_err(|problem| format!("{problem}\n{}", first.trace_jsonl()))?;
    let second = run(script, order);
    if first.trace_jsonl() != second.trace_jsonl() || first.state != second.state {
        return Err("rerun diverged".into());
    }
    Ok(())
}

pub fn policy_order() -> impl Strategy<Value = Vec<usize>> {
    Just(vec![0usize, 1, 2, 3]).prop_shuffle()
}
