//! Event-driven policy runtime.
//!
//! Actions arrive as events. An action no enabled policy governs is applied to
//! the platform straight away. A governed action is held while a proposal
//! collects ballots; it is applied only if the proposal passes. Every effect is
//! appended to a trace of `{seq, at, kind, payload}` records.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compiler::{BoundExecution, ExecutablePolicy, JURY_STARTED, JUROR_NOTICE};
use crate::entity::{Entity, Value, ValueType};
use crate::platform::{CommunityState, UserId};
use crate::procedures::{BallotContent, BallotForm, CheckInput, ProcedureError, Status};
use crate::reference::ReferenceToken;
use crate::registry::{ComponentKind, Registry};
use crate::rng::SplitMix64;
use crate::stdlib::behaviors::{BaseActionBehavior, Behavior, ExecutionBehavior, ProcedureBehavior};
use crate::stdlib::decorators::{decorator_hooks, Guard, StartHook, TickHook};
use crate::stdlib::executions::apply_execution;

pub const THUMBS_UP: &str = "👍";
pub const THUMBS_DOWN: &str = "👎";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("event `{0}` was already submitted")]
    DuplicateEvent(String),
    #[error("`{0}` is not a base action")]
    UnknownActionKind(String),
    #[error("{kind} event fields are malformed: {detail}")]
    MalformedFields { kind: String, detail: String },
    #[error("no proposal `{0}`")]
    UnknownProposal(String),
    #[error("proposal `{0}` is closed")]
    ProposalClosed(String),
    #[error("`{voter}` is not eligible to vote on `{proposal}`")]
    IneligibleVoter { proposal: String, voter: String },
    #[error("this procedure takes {expected:?} ballots")]
    BallotFormMismatch { expected: BallotForm },
    #[error(transparent)]
    InvalidBallot(#[from] ProcedureError),
    #[error("clock cannot move back from {now} to {requested}")]
    ClockRegression { now: i64, requested: i64 },
    #[error("policy `{0}` is already installed")]
    DuplicatePolicy(String),
    #[error("no policy `{0}`")]
    UnknownPolicy(String),
    #[error("policy `{policy}` was compiled against library version {compiled}, engine runs version {running}")]
    StalePolicy { policy: String, compiled: u64, running: u64 },
}

/// An action performed on the platform.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionEvent {
    pub event_id: String,
    pub kind: String,
    pub fields: BTreeMap<String, Value>,
    pub at: i64,
}

/// Wire form of an action: field values are plain JSON interpreted against
/// the base action's declared fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawActionEvent {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_id: Option<String>,
    pub kind: String,
    #[serde(default)]
    pub fields: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposalStatus {
    Open,
    Passed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Ballot {
    pub voter: UserId,
    pub content: BallotContent,
    pub cast_at: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Proposal {
    pub proposal_id: String,
    pub policy_id: String,
    #[serde(skip)]
    policy_index: usize,
    pub governed_event: ActionEvent,
    pub opened_at: i64,
    pub status: ProposalStatus,
    pub ballots: BTreeMap<UserId, Ballot>,
    pub slots: BTreeMap<ReferenceToken, Value>,
    pub eligible: Vec<UserId>,
    /// Procedure settings bound at open.
    #[serde(skip)]
    settings: BTreeMap<String, Value>,
    /// Messages announcing the vote; reactions on them count as ballots.
    pub announcements: Vec<String>,
    #[serde(skip)]
    reminded: BTreeSet<usize>,
}

impl Proposal {
    pub fn settings(&self) -> &BTreeMap<String, Value> {
        &self.settings
    }
}

/// Why an execution ran.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Procedure notifications when a proposal opens, e.g. telling jurors.
    Notify,
    /// Decorator start hooks.
    Start,
    /// Decorator tick hooks.
    Reminder,
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum Effect {
    ActionPassedThrough {
        event_id: String,
        action: String,
    },
    ProposalOpened {
        proposal: String,
        policy: String,
        event_id: String,
        eligible: Vec<UserId>,
        /// Other enabled policies that matched but were shadowed.
        #[serde(skip_serializing_if = "Vec::is_empty")]
        also_matched: Vec<String>,
    },
    VoteRecorded {
        proposal: String,
        voter: UserId,
        ballot: BallotContent,
        replaced: bool,
    },
    ExecutionRequest {
        proposal: String,
        phase: Phase,
        execution: String,
        settings: BTreeMap<String, Value>,
        #[serde(skip_serializing_if = "Option::is_none")]
        message_id: Option<String>,
    },
    ExecutionFailed {
        proposal: String,
        phase: Phase,
        execution: String,
        error: String,
    },
    ProposalClosed {
        proposal: String,
        status: ProposalStatus,
        #[serde(skip_serializing_if = "Option::is_none")]
        reason: Option<String>,
        outputs: BTreeMap<String, Value>,
    },
    ActionApplied {
        proposal: String,
        event_id: String,
    },
    ActionFailed {
        event_id: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        proposal: Option<String>,
        error: String,
    },
    /// A scripted command the engine refused; recorded so traces show it.
    CommandRejected {
        command: serde_json::Value,
        error: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub seq: u64,
    pub at: i64,
    #[serde(flatten)]
    pub effect: Effect,
}

/// Result of evaluating a proposal's decorated procedure once.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub status: Status,
    pub outputs: BTreeMap<String, Value>,
    /// The outermost decorator that held the proposal at Pending.
    pub held_by: Option<String>,
}

/// Consults decorators outermost first, then the base procedure. A closing
/// evaluation skips guards and asks the procedure for a final decision.
pub fn evaluate(
    plan: &ExecutablePolicy,
    proposal: &Proposal,
    now: i64,
    community: &CommunityState,
    closing: bool,
) -> Result<Evaluation, String> {
    let mut held_by = None;
    if !closing {
        for decorator in &plan.decorators {
            let settings = decorator.binding.bind(&proposal.slots, community).map_err(|e| format!("{}: {e}", decorator.name))?;
            let hooks = decorator_hooks(decorator.behavior, &settings).map_err(|e| format!("{}: {e}", decorator.name))?;
            let holds = match hooks.guard {
                Some(Guard::Elapsed { ms }) => now - proposal.opened_at < ms,
                Some(Guard::AllVotes) => proposal.ballots.len() < proposal.eligible.len(),
                None => false,
            };
            if holds {
                held_by = Some(decorator.name.clone());
                break;
            }
        }
    }
    let ballots: BTreeMap<UserId, BallotContent> =
        proposal.ballots.iter().map(|(voter, b)| (voter.clone(), b.content.clone())).collect();
    let outcome = plan
        .procedure
        .behavior
        .check(&CheckInput { ballots: &ballots, settings: &proposal.settings, eligible: &proposal.eligible, closing })
        .map_err(|e| e.to_string())?;
    let status = if held_by.is_some() { Status::Pending } else { outcome.status };
    Ok(Evaluation { status, outputs: outcome.outputs, held_by })
}

/// One JSON object per line, each terminated by a newline.
pub fn trace_to_jsonl(trace: &[TraceRecord]) -> String {
    let mut out = String::new();
    for record in trace {
        out.push_str(&serde_json::to_string(record).expect("trace records serialize"));
        out.push('\n');
    }
    out
}

fn conforms(entity: Entity, value_type: ValueType, value: &Value) -> bool {
    match (entity, value) {
        (Entity::UserList, Value::UserList(_)) => true,
        (_, Value::List(items)) => value_type == ValueType::List && items.iter().all(|v| conforms(entity, ValueType::Scalar, v)),
        _ if value_type == ValueType::List => false,
        (Entity::Text, Value::Text(_))
        | (Entity::Number, Value::Number(_))
        | (Entity::Boolean, Value::Boolean(_))
        | (Entity::Timestamp, Value::Timestamp(_))
        | (Entity::CommunityUser, Value::User(_))
        | (Entity::CommunityRole, Value::Role(_))
        | (Entity::Channel, Value::Channel(_))
        | (Entity::Document, Value::Document(_)) => true,
        _ => false,
    }
}

#[derive(Debug, Clone)]
struct InstalledPolicy {
    plan: Arc<ExecutablePolicy>,
    enabled: bool,
}

#[derive(Debug, Clone)]
pub struct Engine {
    registry: Arc<Registry>,
    community: CommunityState,
    seed: u64,
    policies: Vec<InstalledPolicy>,
    proposals: Vec<Proposal>,
    events_seen: BTreeSet<String>,
    trace: Vec<TraceRecord>,
}

impl Engine {
    pub fn new(registry: Arc<Registry>, community: CommunityState, seed: u64) -> Self {
        Self {
            registry,
            community,
            seed,
            policies: Vec::new(),
            proposals: Vec::new(),
            events_seen: BTreeSet::new(),
            trace: Vec::new(),
        }
    }

    /// Installs a policy after all previously installed ones; earlier
    /// policies take precedence when several match.
    pub fn add_policy(&mut self, plan: ExecutablePolicy) -> Result<(), EngineError> {
        if self.policies.iter().any(|p| p.plan.policy_id == plan.policy_id) {
            return Err(EngineError::DuplicatePolicy(plan.policy_id));
        }
        if plan.registry_version != self.registry.version() {
            return Err(EngineError::StalePolicy {
                policy: plan.policy_id,
                compiled: plan.registry_version,
                running: self.registry.version(),
            });
        }
        self.policies.push(InstalledPolicy { plan: Arc::new(plan), enabled: true });
        Ok(())
    }

    pub fn set_policy_enabled(&mut self, policy_id: &str, enabled: bool) -> Result<(), EngineError> {
        let policy = self
            .policies
            .iter_mut()
            .find(|p| p.plan.policy_id == policy_id)
            .ok_or_else(|| EngineError::UnknownPolicy(policy_id.to_owned()))?;
        policy.enabled = enabled;
        Ok(())
    }

    pub fn policies(&self) -> impl Iterator<Item = (&ExecutablePolicy, bool)> {
        self.policies.iter().map(|p| (p.plan.as_ref(), p.enabled))
    }

    pub fn community(&self) -> &CommunityState {
        &self.community
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn now(&self) -> i64 {
        self.community.clock
    }

    pub fn proposals(&self) -> &[Proposal] {
        &self.proposals
    }

    pub fn proposal(&self, id: &str) -> Option<&Proposal> {
        self.proposals.iter().find(|p| p.proposal_id == id)
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn trace_jsonl(&self) -> String {
        trace_to_jsonl(&self.trace)
    }

    /// Id the next event without an explicit one receives.
    pub fn next_event_id(&self) -> String {
        let mut n = self.events_seen.len() + 1;
        loop {
            let id = format!("e{n}");
            if !self.events_seen.contains(&id) {
                return id;
            }
            n += 1;
        }
    }

    /// Moves the logical clock forward without evaluating anything.
    pub fn advance_clock(&mut self, to: i64) -> Result<(), EngineError> {
        let now = self.now();
        self.community
            .advance_clock(to)
            .map_err(|_| EngineError::ClockRegression { now, requested: to })
    }

    /// Interprets wire field values against the base action's declaration.
    pub fn parse_event(&self, raw: RawActionEvent, at: i64) -> Result<ActionEvent, EngineError> {
        let base = self
            .registry
            .lookup(ComponentKind::BaseAction, &raw.kind)
            .map_err(|_| EngineError::UnknownActionKind(raw.kind.clone()))?;
        let malformed = |detail: String| EngineError::MalformedFields { kind: raw.kind.clone(), detail };
        if let Some(extra) = raw.fields.keys().find(|k| base.variable(k).is_none()) {
            return Err(malformed(format!("unexpected field `{extra}`")));
        }
        let mut fields = BTreeMap::new();
        for var in &base.variables {
            let json = raw.fields.get(&var.name).ok_or_else(|| malformed(format!("missing field `{}`", var.name)))?;
            let value = Value::from_literal(var.entity, var.value_type, json)
                .map_err(|e| malformed(format!("field `{}`: {e}", var.name)))?;
            fields.insert(var.name.clone(), value);
        }
        let event_id = raw.event_id.unwrap_or_else(|| self.next_event_id());
        Ok(ActionEvent { event_id, kind: raw.kind, fields, at })
    }

    /// Records a refused command in the trace.
    pub fn record_rejection(&mut self, command: serde_json::Value, error: &EngineError) {
        self.emit(Effect::CommandRejected { command, error: error.to_string() });
    }

    fn emit(&mut self, effect: Effect) {
        let seq = self.trace.len() as u64 + 1;
        self.trace.push(TraceRecord { seq, at: self.community.clock, effect });
    }

    fn effects_since(&self, start: usize) -> Vec<Effect> {
        self.trace[start..].iter().map(|r| r.effect.clone()).collect()
    }

    fn base_action(&self, kind: &str) -> Result<(BaseActionBehavior, &crate::registry::ComponentDescriptor), EngineError> {
        let descriptor = self
            .registry
            .lookup(ComponentKind::BaseAction, kind)
            .map_err(|_| EngineError::UnknownActionKind(kind.to_owned()))?;
        match descriptor.resolve_behavior() {
            Some(Behavior::BaseAction(b)) => Ok((b, descriptor)),
            _ => Err(EngineError::UnknownActionKind(kind.to_owned())),
        }
    }

    pub fn submit_event(&mut self, event: ActionEvent) -> Result<Vec<Effect>, EngineError> {
        if self.events_seen.contains(&event.event_id) {
            return Err(EngineError::DuplicateEvent(event.event_id));
        }
        let (behavior, descriptor) = self.base_action(&event.kind)?;
        let malformed = |detail: String| EngineError::MalformedFields { kind: event.kind.clone(), detail };
        if let Some(extra) = event.fields.keys().find(|k| descriptor.variable(k).is_none()) {
            return Err(malformed(format!("unexpected field `{extra}`")));
        }
        for var in &descriptor.variables {
            match event.fields.get(&var.name) {
                Some(value) if conforms(var.entity, var.value_type, value) => {}
                Some(_) => return Err(malformed(format!("field `{}` must be {}", var.name, var.entity))),
                None => return Err(malformed(format!("missing field `{}`", var.name))),
            }
        }
        self.advance_clock(event.at)?;
        self.events_seen.insert(event.event_id.clone());
        let start = self.trace.len();

        if let Some((proposal, voter, yes)) = self.reaction_vote(behavior, &event) {
            self.pass_through(behavior, &event);
            let content = BallotContent::YesNo(yes);
            if let Err(error) = self.cast_vote(&proposal, &voter, content.clone()) {
                let command = serde_json::json!({"vote": {"proposal": proposal, "voter": voter, "ballot": content}});
                self.record_rejection(command, &error);
            }
            return Ok(self.effects_since(start));
        }

        let mut matched = Vec::new();
        for (index, installed) in self.policies.iter().enumerate() {
            if !installed.enabled {
                continue;
            }
            if let Some(exports) = installed.plan.matcher.matches(&event.kind, &event.fields, event.at, &self.community) {
                matched.push((index, exports));
            }
        }
        if matched.is_empty() {
            self.pass_through(behavior, &event);
        } else {
            let (index, exports) = matched.remove(0);
            let also: Vec<String> = matched.iter().map(|(i, _)| self.policies[*i].plan.policy_id.clone()).collect();
            self.open(index, event, exports, also);
        }
        Ok(self.effects_since(start))
    }

    fn pass_through(&mut self, behavior: BaseActionBehavior, event: &ActionEvent) {
        self.emit(Effect::ActionPassedThrough { event_id: event.event_id.clone(), action: event.kind.clone() });
        if let Err(error) = self.community.apply_action(behavior, &event.fields) {
            self.emit(Effect::ActionFailed { event_id: event.event_id.clone(), proposal: None, error: error.to_string() });
        }
    }

    /// A thumbs reaction on an open proposal's announcement is a yes/no ballot.
    fn reaction_vote(&self, behavior: BaseActionBehavior, event: &ActionEvent) -> Option<(String, UserId, bool)> {
        if behavior != BaseActionBehavior::AddReaction {
            return None;
        }
        let yes = match event.fields.get("emoji").and_then(Value::as_str)? {
            THUMBS_UP => true,
            THUMBS_DOWN => false,
            _ => return None,
        };
        let message = event.fields.get("message_ref").and_then(Value::as_str)?;
        let voter = event.fields.get("initiator").and_then(Value::as_str)?;
        let proposal = self
            .proposals
            .iter()
            .find(|p| p.status == ProposalStatus::Open && p.announcements.iter().any(|a| a == message))?;
        let form = self.policies[proposal.policy_index].plan.procedure.behavior.ballot_form();
        if form != BallotForm::YesNo && form != BallotForm::Liquid {
            return None;
        }
        Some((proposal.proposal_id.clone(), voter.to_owned(), yes))
    }

    fn open(&mut self, policy_index: usize, event: ActionEvent, exports: BTreeMap<String, Value>, also_matched: Vec<String>) {
        let ordinal = self.proposals.len() + 1;
        let proposal_id = format!("p{ordinal}");
        let plan = self.policies[policy_index].plan.clone();
        let mut slots = BTreeMap::new();
        for (name, value) in event.fields.iter().chain(&exports) {
            slots.insert(ReferenceToken::action(name), value.clone());
        }
        let mut rng = SplitMix64::for_proposal(self.seed, ordinal as u64);
        let behavior = plan.procedure.behavior;
        let (settings, opened) = match plan.procedure.binding.bind(&slots, &self.community) {
            Ok(settings) => {
                for (name, value) in &settings {
                    slots.insert(ReferenceToken::procedure(name), value.clone());
                }
                let opened = behavior.open(&self.community, &settings, &mut rng).map_err(|e| e.to_string());
                (settings, opened)
            }
            Err(e) => (BTreeMap::new(), Err(e.to_string())),
        };
        let eligible = opened.as_ref().cloned().unwrap_or_default();
        let index = self.proposals.len();
        self.proposals.push(Proposal {
            proposal_id: proposal_id.clone(),
            policy_id: plan.policy_id.clone(),
            policy_index,
            governed_event: event.clone(),
            opened_at: self.now(),
            status: ProposalStatus::Open,
            ballots: BTreeMap::new(),
            slots,
            eligible: eligible.clone(),
            settings: settings.clone(),
            announcements: Vec::new(),
            reminded: BTreeSet::new(),
        });
        self.emit(Effect::ProposalOpened {
            proposal: proposal_id.clone(),
            policy: plan.policy_id.clone(),
            event_id: event.event_id,
            eligible: eligible.clone(),
            also_matched,
        });
        if let Err(reason) = opened {
            self.close(index, ProposalStatus::Failed, Some(reason));
            return;
        }
        if eligible.is_empty() {
            self.close(index, ProposalStatus::Failed, Some("no eligible voters".into()));
            return;
        }

        if behavior == ProcedureBehavior::Jury {
            for juror in &eligible {
                let settings = BTreeMap::from([
                    ("user".to_owned(), Value::User(juror.clone())),
                    ("text".to_owned(), Value::Text(JUROR_NOTICE.to_owned())),
                ]);
                self.execute(index, Phase::Notify, "DirectMessage", ExecutionBehavior::DirectMessage, settings);
            }
            if let Some(channel) = settings.get("vote_channel") {
                let settings = BTreeMap::from([
                    ("channel".to_owned(), channel.clone()),
                    ("text".to_owned(), Value::Text(JURY_STARTED.to_owned())),
                ]);
                if let Some(id) = self.execute(index, Phase::Notify, "PostMessage", ExecutionBehavior::PostMessage, settings) {
                    self.proposals[index].announcements.push(id);
                }
            }
        }
        for &i in &plan.start_hooks {
            let decorator = &plan.decorators[i];
            let hooks = decorator
                .binding
                .bind(&self.proposals[index].slots, &self.community)
                .map_err(|e| e.to_string())
                .and_then(|s| decorator_hooks(decorator.behavior, &s).map_err(|e| e.to_string()));
            match hooks {
                Ok(hooks) => {
                    if let Some(StartHook::Announce { channel, text }) = hooks.start_hook {
                        let settings = BTreeMap::from([
                            ("channel".to_owned(), Value::Channel(channel)),
                            ("text".to_owned(), Value::Text(text)),
                        ]);
                        if let Some(id) = self.execute(index, Phase::Start, "PostMessage", ExecutionBehavior::PostMessage, settings) {
                            self.proposals[index].announcements.push(id);
                        }
                    }
                }
                Err(error) => self.emit(Effect::ExecutionFailed {
                    proposal: proposal_id.clone(),
                    phase: Phase::Start,
                    execution: decorator.name.clone(),
                    error,
                }),
            }
        }
        self.settle(index, false);
    }

    pub fn cast_vote(&mut self, proposal_id: &str, voter: &str, content: BallotContent) -> Result<Vec<Effect>, EngineError> {
        let index = self
            .proposals
            .iter()
            .position(|p| p.proposal_id == proposal_id)
            .ok_or_else(|| EngineError::UnknownProposal(proposal_id.to_owned()))?;
        let proposal = &self.proposals[index];
        if proposal.status != ProposalStatus::Open {
            return Err(EngineError::ProposalClosed(proposal_id.to_owned()));
        }
        if !proposal.eligible.iter().any(|e| e == voter) {
            return Err(EngineError::IneligibleVoter { proposal: proposal_id.to_owned(), voter: voter.to_owned() });
        }
        let plan = self.policies[proposal.policy_index].plan.clone();
        let behavior = plan.procedure.behavior;
        let form = behavior.ballot_form();
        if !form.accepts(&content) {
            return Err(EngineError::BallotFormMismatch { expected: form });
        }
        behavior.validate_ballot(voter, &content, &proposal.settings, &proposal.eligible)?;

        let start = self.trace.len();
        let cast_at = self.now();
        let ballot = Ballot { voter: voter.to_owned(), content: content.clone(), cast_at };
        let replaced = self.proposals[index].ballots.insert(voter.to_owned(), ballot).is_some();
        self.emit(Effect::VoteRecorded {
            proposal: proposal_id.to_owned(),
            voter: voter.to_owned(),
            ballot: content,
            replaced,
        });
        for &i in &plan.vote_hooks {
            let decorator = &plan.decorators[i];
            if let Ok(settings) = decorator.binding.bind(&self.proposals[index].slots, &self.community) {
                if let Ok(hooks) = decorator_hooks(decorator.behavior, &settings) {
                    if let Some(hook) = hooks.vote_hook {
                        match hook {}
                    }
                }
            }
        }
        self.settle(index, false);
        Ok(self.effects_since(start))
    }

    /// Runs tick hooks of every open proposal, then re-evaluates each.
    pub fn tick(&mut self, now: i64) -> Result<Vec<Effect>, EngineError> {
        self.advance_clock(now)?;
        let start = self.trace.len();
        let open: Vec<usize> = (0..self.proposals.len())
            .filter(|&i| self.proposals[i].status == ProposalStatus::Open)
            .collect();
        for index in open {
            let plan = self.policies[self.proposals[index].policy_index].plan.clone();
            let elapsed = now - self.proposals[index].opened_at;
            let mut closing = false;
            for &i in &plan.tick_hooks {
                let decorator = &plan.decorators[i];
                let hooks = decorator
                    .binding
                    .bind(&self.proposals[index].slots, &self.community)
                    .map_err(|e| e.to_string())
                    .and_then(|s| decorator_hooks(decorator.behavior, &s).map_err(|e| e.to_string()));
                let hook = match hooks {
                    Ok(hooks) => hooks.tick_hook,
                    Err(error) => {
                        if self.proposals[index].reminded.insert(i) {
                            self.emit(Effect::ExecutionFailed {
                                proposal: self.proposals[index].proposal_id.clone(),
                                phase: Phase::Reminder,
                                execution: decorator.name.clone(),
                                error,
                            });
                        }
                        continue;
                    }
                };
                match hook {
                    Some(TickHook::CloseAfter { ms }) if elapsed >= ms => closing = true,
                    Some(TickHook::RemindNonVoters { ms, text }) if elapsed >= ms => {
                        if !self.proposals[index].reminded.insert(i) {
                            continue;
                        }
                        let proposal = &self.proposals[index];
                        let non_voters: Vec<UserId> =
                            proposal.eligible.iter().filter(|u| !proposal.ballots.contains_key(*u)).cloned().collect();
                        for user in non_voters {
                            let settings = BTreeMap::from([
                                ("user".to_owned(), Value::User(user)),
                                ("text".to_owned(), Value::Text(text.clone())),
                            ]);
                            self.execute(index, Phase::Reminder, "DirectMessage", ExecutionBehavior::DirectMessage, settings);
                        }
                    }
                    _ => {}
                }
            }
            self.settle(index, closing);
        }
        Ok(self.effects_since(start))
    }

    /// Evaluates a proposal, refreshes its output slots, and closes it when
    /// decided.
    fn settle(&mut self, index: usize, closing: bool) {
        let plan = self.policies[self.proposals[index].policy_index].plan.clone();
        match evaluate(&plan, &self.proposals[index], self.now(), &self.community, closing) {
            Ok(evaluation) => {
                let proposal = &mut self.proposals[index];
                for (name, value) in &evaluation.outputs {
                    proposal.slots.insert(ReferenceToken::procedure(name), value.clone());
                }
                match evaluation.status {
                    Status::Pending => {}
                    Status::Passed => self.close(index, ProposalStatus::Passed, None),
                    Status::Failed => self.close(index, ProposalStatus::Failed, None),
                }
            }
            Err(reason) => self.close(index, ProposalStatus::Failed, Some(reason)),
        }
    }

    fn close(&mut self, index: usize, status: ProposalStatus, reason: Option<String>) {
        let proposal = &mut self.proposals[index];
        debug_assert_eq!(proposal.status, ProposalStatus::Open);
        proposal.status = status;
        let plan = self.policies[proposal.policy_index].plan.clone();
        let outputs: BTreeMap<String, Value> = plan
            .procedure
            .variables
            .iter()
            .filter_map(|name| proposal.slots.get(&ReferenceToken::procedure(name)).map(|v| (name.clone(), v.clone())))
            .collect();
        let proposal_id = proposal.proposal_id.clone();
        let event = proposal.governed_event.clone();
        self.emit(Effect::ProposalClosed { proposal: proposal_id.clone(), status, reason, outputs });
        let (phase, program) = if status == ProposalStatus::Passed {
            match self.community.apply_action(plan.matcher.action, &event.fields) {
                Ok(()) => self.emit(Effect::ActionApplied { proposal: proposal_id, event_id: event.event_id }),
                Err(error) => self.emit(Effect::ActionFailed {
                    event_id: event.event_id,
                    proposal: Some(proposal_id),
                    error: error.to_string(),
                }),
            }
            (Phase::Pass, &plan.pass_program)
        } else {
            (Phase::Fail, &plan.fail_program)
        };
        for execution in program {
            self.run_bound(index, phase, execution);
        }
    }

    fn run_bound(&mut self, index: usize, phase: Phase, execution: &BoundExecution) {
        match execution.binding.bind(&self.proposals[index].slots, &self.community) {
            Ok(settings) => {
                self.execute(index, phase, &execution.name, execution.behavior, settings);
            }
            Err(error) => self.emit(Effect::ExecutionFailed {
                proposal: self.proposals[index].proposal_id.clone(),
                phase,
                execution: execution.name.clone(),
                error: error.to_string(),
            }),
        }
    }

    /// Applies an execution and records it. Returns the id of a posted message.
    fn execute(
        &mut self,
        index: usize,
        phase: Phase,
        name: &str,
        behavior: ExecutionBehavior,
        settings: BTreeMap<String, Value>,
    ) -> Option<String> {
        let proposal = self.proposals[index].proposal_id.clone();
        match apply_execution(behavior, &settings, &mut self.community) {
            Ok(outcome) => {
                self.emit(Effect::ExecutionRequest {
                    proposal,
                    phase,
                    execution: name.to_owned(),
                    settings,
                    message_id: outcome.message_id.clone(),
                });
                outcome.message_id
            }
            Err(error) => {
                self.emit(Effect::ExecutionFailed { proposal, phase, execution: name.to_owned(), error: error.to_string() });
                None
            }
        }
    }
}
