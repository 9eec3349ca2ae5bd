//! Scripted runs against a simulated community.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compiler::ExecutablePolicy;
use crate::engine::{trace_to_jsonl, Engine, EngineError, Proposal, RawActionEvent, TraceRecord};
use crate::platform::{CommunityState, PlatformError, UserId};
use crate::procedures::BallotContent;
use crate::registry::Registry;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("step {step} at {at} comes before the previous step at {previous}")]
    ScriptOrderViolation { step: usize, at: i64, previous: i64 },
    #[error("step {step} refers to proposal `{reference}`, which has not been opened")]
    UnresolvedProposalRef { step: usize, reference: String },
    #[error("initial community is inconsistent: {0}")]
    InvalidInitial(#[from] PlatformError),
    #[error(transparent)]
    Policy(EngineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub seed: u64,
    #[serde(default)]
    pub initial: CommunityState,
    #[serde(default)]
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub at: i64,
    #[serde(rename = "do")]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Action(RawActionEvent),
    Vote(VoteCommand),
    Tick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoteCommand {
    /// Ordinal reference: `p1` is the first proposal opened in the run.
    pub proposal: String,
    pub voter: UserId,
    pub ballot: BallotInput,
}

/// A ballot, with a bare boolean accepted for yes/no.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BallotInput {
    YesNo(bool),
    Content(BallotContent),
}

impl From<BallotInput> for BallotContent {
    fn from(input: BallotInput) -> Self {
        match input {
            BallotInput::YesNo(b) => BallotContent::YesNo(b),
            BallotInput::Content(c) => c,
        }
    }
}

impl ScenarioScript {
    pub fn from_json(source: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(source)
    }

    pub fn check_order(&self) -> Result<(), ScenarioError> {
        let mut previous = self.initial.clock;
        for (step, s) in self.steps.iter().enumerate() {
            if s.at < previous {
                return Err(ScenarioError::ScriptOrderViolation { step, at: s.at, previous });
            }
            previous = s.at;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub trace: Vec<TraceRecord>,
    pub state: CommunityState,
    pub proposals: Vec<Proposal>,
}

impl ScenarioRun {
    pub fn trace_jsonl(&self) -> String {
        trace_to_jsonl(&self.trace)
    }
}

/// Feeds every step to a fresh engine. Commands the engine refuses are
/// recorded in the trace rather than aborting the run.
pub fn run_scenario(
    script: &ScenarioScript,
    policies: &[ExecutablePolicy],
    registry: Arc<Registry>,
) -> Result<ScenarioRun, ScenarioError> {
    script.check_order()?;
    script.initial.check()?;
    let mut engine = Engine::new(registry, script.initial.clone(), script.seed);
    for plan in policies {
        engine.add_policy(plan.clone()).map_err(ScenarioError::Policy)?;
    }
    for (step, s) in script.steps.iter().enumerate() {
        let command = serde_json::to_value(&s.command).expect("commands serialize");
        let result = match &s.command {
            Command::Action(raw) => engine
                .parse_event(raw.clone(), s.at)
                .and_then(|event| engine.submit_event(event)),
            Command::Vote(vote) => {
                if engine.proposal(&vote.proposal).is_none() {
                    return Err(ScenarioError::UnresolvedProposalRef { step, reference: vote.proposal.clone() });
                }
                engine
                    .advance_clock(s.at)
                    .and_then(|()| engine.cast_vote(&vote.proposal, &vote.voter, vote.ballot.clone().into()))
            }
            Command::Tick => engine.tick(s.at),
        };
        if let Err(error) = result {
            engine.record_rejection(command, &error);
        }
    }
    Ok(ScenarioRun {
        trace: engine.trace().to_vec(),
        state: engine.community().clone(),
        proposals: engine.proposals().to_vec(),
    })
}
