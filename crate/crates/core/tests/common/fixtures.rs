use std::sync::Arc;
use std::time::Instant;

use pika_core::compiler::compile;
use pika_core::engine::{Effect, ProposalStatus};
use pika_core::policy::PolicyDocument;
use pika_core::scenario::{run_scenario, Command, ScenarioRun, ScenarioScript};
use pika_core::stdlib::stdlib_registry;
use pika_core::validate::validate_policy;

use super::procedures::irv_oracle;

/// Fixture files, embedded so any crate can include this module.
pub fn text(name: &str) -> &'static str {
    match name {
        "jury_rename_policy.json" => include_str!("../../fixtures/jury_rename_policy.json"),
        "jury_rename_scenario.json" => include_str!("../../fixtures/jury_rename_scenario.json"),
        "jury_rename_trace.jsonl" => include_str!("../../fixtures/jury_rename_trace.jsonl"),
        "consensus_invite_policy.json" => include_str!("../../fixtures/consensus_invite_policy.json"),
        "consensus_invite_all_yes_scenario.json" => include_str!("../../fixtures/consensus_invite_all_yes_scenario.json"),
        "consensus_invite_all_yes_trace.jsonl" => include_str!("../../fixtures/consensus_invite_all_yes_trace.jsonl"),
        "consensus_invite_one_no_scenario.json" => include_str!("../../fixtures/consensus_invite_one_no_scenario.json"),
        "consensus_invite_one_no_trace.jsonl" => include_str!("../../fixtures/consensus_invite_one_no_trace.jsonl"),
        "admin_election_policy.json" => include_str!("../../fixtures/admin_election_policy.json"),
        "admin_election_scenario.json" => include_str!("../../fixtures/admin_election_scenario.json"),
        "admin_election_trace.jsonl" => include_str!("../../fixtures/admin_election_trace.jsonl"),
        other => panic!("no fixture {other}"),
    }
}

/// Validates, compiles and runs one policy against one scenario.
pub fn run(policy: &str, scenario: &str) -> Result<ScenarioRun, String> {
    let registry = Arc::new(stdlib_registry());
    let doc = PolicyDocument::from_json(text(policy)).map_err(|e| format!("{policy}: {e}"))?;
    let script = ScenarioScript::from_json(text(scenario)).map_err(|e| format!("{scenario}: {e}"))?;
    let report = validate_policy(&doc, &registry, &script.initial.snapshot());
    if !report.is_empty() {
        return Err(format!("{policy}: {:?}", report.codes()));
    }
    let plan = compile(&doc, &registry).map_err(|e| e.to_string())?;
    run_scenario(&script, &[plan], registry).map_err(|e| e.to_string())
}

pub fn golden(run: &ScenarioRun, name: &str) -> Result<(), String> {
    if run.trace_jsonl() != text(name) {
        return Err(format!("trace differs from {name}"));
    }
    Ok(())
}

fn closed(run: &ScenarioRun) -> Vec<ProposalStatus> {
    run.trace
        .iter()
        .filter_map(|r| match &r.effect {
            Effect::ProposalClosed { status, .. } => Some(*status),
            _ => None,
        })
        .collect()
}

fn ensure(ok: bool, problem: impl FnOnce() -> String) -> Result<(), String> {
    if ok { Ok(()) } else { Err(problem()) }
}

pub fn check_jury_rename() -> Result<(), String> {
    let started = Instant::now();
    let run = run("jury_rename_policy.json", "jury_rename_scenario.json")?;
    let elapsed = started.elapsed().as_secs_f64();
    golden(&run, "jury_rename_trace.jsonl")?;
    ensure(elapsed < 1.0, || format!("took {elapsed:.3}s"))?;
    // The rename by a user without base_user passes straight through.
    ensure(
        matches!(&run.trace[0].effect, Effect::ActionPassedThrough { event_id, .. } if event_id == "e1"),
        || "first rename was not passed through".into(),
    )?;
    ensure(closed(&run) == [ProposalStatus::Passed], || format!("closed {:?}", closed(&run)))?;
    ensure(run.state.channels["C1"].name == "lobby", || format!("C1 is {}", run.state.channels["C1"].name))?;
    let posted = run.state.messages.iter().filter(|m| m.author.is_none()).last().ok_or("nothing posted")?;
    ensure(posted.text.contains('3') && posted.text.contains('2') && !posted.text.contains("${"), || {
        format!("posted {:?}", posted.text)
    })?;
    let again = self::run("jury_rename_policy.json", "jury_rename_scenario.json")?;
    ensure(again == run, || "rerun diverged".into())
}

pub fn check_consensus_invite_all_yes() -> Result<(), String> {
    let run = run("consensus_invite_policy.json", "consensus_invite_all_yes_scenario.json")?;
    golden(&run, "consensus_invite_all_yes_trace.jsonl")?;
    ensure(closed(&run) == [ProposalStatus::Passed], || format!("closed {:?}", closed(&run)))?;
    ensure(run.state.channels["C3"].members.contains("U4"), || "U4 not invited".into())?;
    ensure(
        run.trace.iter().any(|r| matches!(&r.effect, Effect::ActionApplied { event_id, .. } if event_id == "e1")),
        || "invite never applied".into(),
    )?;
    ensure(matches!(run.trace.last().map(|r| &r.effect), Some(Effect::ExecutionRequest { .. })), || {
        "pass execution missing".into()
    })
}

pub fn check_consensus_invite_one_no() -> Result<(), String> {
    let run = run("consensus_invite_policy.json", "consensus_invite_one_no_scenario.json")?;
    golden(&run, "consensus_invite_one_no_trace.jsonl")?;
    ensure(closed(&run) == [ProposalStatus::Failed], || format!("closed {:?}", closed(&run)))?;
    ensure(!run.state.channels["C3"].members.contains("U4"), || "U4 invited anyway".into())?;
    ensure(!run.trace.iter().any(|r| matches!(r.effect, Effect::ActionApplied { .. })), || {
        "invite applied".into()
    })?;
    let last = run.state.messages.last().ok_or("no fail message")?;
    ensure(last.channel == "C3" && last.text.contains("declined"), || format!("last message {:?}", last.text))
}

/// Returns the elected user.
pub fn check_admin_election() -> Result<String, String> {
    let run = run("admin_election_policy.json", "admin_election_scenario.json")?;
    golden(&run, "admin_election_trace.jsonl")?;
    let proposal = run.proposals.first().ok_or("no proposal")?;
    let candidates: Vec<String> =
        proposal.settings()["candidates"].as_user_list().ok_or("candidates not a user list")?.to_vec();
    let named: Vec<&str> = candidates.iter().map(|u| run.state.users[u].display_name.as_str()).collect();
    ensure(named == ["alice", "bob", "carol"], || format!("candidates {named:?}"))?;
    ensure(closed(&run) == [ProposalStatus::Passed], || format!("closed {:?}", closed(&run)))?;

    let script = ScenarioScript::from_json(text("admin_election_scenario.json")).map_err(|e| e.to_string())?;
    let ballots: Vec<Vec<String>> = script
        .steps
        .iter()
        .filter_map(|s| match &s.command {
            Command::Vote(v) => serde_json::to_value(&v.ballot).ok()?["ranking"]
                .as_array()
                .map(|r| r.iter().filter_map(|c| c.as_str().map(str::to_owned)).collect()),
            _ => None,
        })
        .collect();
    let winner = irv_oracle(&candidates, &ballots);
    ensure(run.state.users[&winner].roles.contains("admin"), || format!("{winner} not made admin"))?;
    let granted = run.trace.iter().any(|r| {
        matches!(&r.effect, Effect::ExecutionRequest { execution, .. } if execution == "GrantRole")
    });
    ensure(granted, || "no GrantRole execution".into())?;
    let reminded: Vec<&str> = run.state.direct_messages.iter().map(|d| d.to.as_str()).collect();
    ensure(reminded == ["U5"], || format!("reminded {reminded:?}"))?;
    Ok(winner)
}
