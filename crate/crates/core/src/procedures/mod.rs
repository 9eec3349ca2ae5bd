//! Base procedures: who may vote, what a ballot looks like, and when a
//! proposal passes or fails.
//!
//! Every check is a pure function of the ballots, the bound settings and the
//! frozen eligible list. `closing` asks for a final decision: anything still
//! pending at that point fails.

pub mod liquid;
pub mod ranked;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entity::Value;
use crate::platform::{CommunityState, UserId};
use crate::rng::SplitMix64;
use crate::stdlib::behaviors::ProcedureBehavior;

pub use liquid::{resolve_delegations, LiquidBallot, LiquidTally};
pub use ranked::{instant_runoff, RunoffResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Pending,
    Passed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProcedureError {
    #[error("jury of {requested} cannot be drawn from a pool of {pool}")]
    JuryTooLarge { requested: usize, pool: usize },
    #[error("the jury pool is empty")]
    EmptyPool,
    #[error("no ballots were cast")]
    NoBallots,
    #[error("there are no candidates")]
    NoCandidates,
    #[error("a ranking must order every candidate exactly once")]
    BallotNotTotalOrder,
    #[error("{votes} votes cost {cost} credits but the budget is {budget}")]
    BudgetExceeded { votes: i64, cost: i128, budget: f64 },
    #[error("voters cannot delegate to themselves")]
    SelfDelegation,
    #[error("`{0}` is not an eligible voter")]
    DelegateNotEligible(String),
    #[error("the dictator `{0}` is not a community member")]
    UnknownDictator(String),
    #[error("setting `{name}` is invalid: {detail}")]
    BadSetting { name: &'static str, detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallotContent {
    YesNo(bool),
    Ranking(Vec<UserId>),
    Quadratic(i64),
    Delegate(UserId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallotForm {
    YesNo,
    Ranking,
    Quadratic,
    /// Yes/no, or delegate to another eligible voter.
    Liquid,
}

impl BallotForm {
    pub fn accepts(self, content: &BallotContent) -> bool {
        matches!(
            (self, content),
            (BallotForm::YesNo, BallotContent::YesNo(_))
                | (BallotForm::Ranking, BallotContent::Ranking(_))
                | (BallotForm::Quadratic, BallotContent::Quadratic(_))
                | (BallotForm::Liquid, BallotContent::YesNo(_) | BallotContent::Delegate(_))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct YesNoOutcome {
    pub status: Status,
    pub yes_votes: usize,
    pub no_votes: usize,
}

/// Smallest yes count reaching `threshold` of `eligible_count`.
pub fn majority_bound(threshold: f64, eligible_count: usize) -> usize {
    // 0.6 * 5 evaluates to 3.0000000000000004; the epsilon keeps that at 3.
    (threshold * eligible_count as f64 - 1e-9).ceil().max(0.0) as usize
}

fn count_to(yes: usize, no: usize, needed: usize, eligible_count: usize) -> YesNoOutcome {
    let outstanding = eligible_count.saturating_sub(yes + no);
    let status = if yes >= needed {
        Status::Passed
    } else if yes + outstanding < needed {
        Status::Failed
    } else {
        Status::Pending
    };
    YesNoOutcome { status, yes_votes: yes, no_votes: no }
}

fn tally(ballots: &[bool]) -> (usize, usize) {
    let yes = ballots.iter().filter(|b| **b).count();
    (yes, ballots.len() - yes)
}

/// Passes once yes votes reach `ceil(threshold * eligible_count)`; fails once
/// that bound is out of reach.
pub fn majority_check(ballots: &[bool], threshold: f64, eligible_count: usize) -> YesNoOutcome {
    let (yes, no) = tally(ballots);
    count_to(yes, no, majority_bound(threshold, eligible_count), eligible_count)
}

/// Majority at threshold 1.0, failing on the first no.
pub fn consensus_check(ballots: &[bool], eligible_count: usize) -> YesNoOutcome {
    let mut outcome = majority_check(ballots, 1.0, eligible_count);
    if outcome.no_votes > 0 {
        outcome.status = Status::Failed;
    }
    outcome
}

/// Jury rule: an absolute count of yes votes among the jurors.
pub fn jury_check(ballots: &[bool], threshold_count: usize, jurors: usize) -> YesNoOutcome {
    let (yes, no) = tally(ballots);
    count_to(yes, no, threshold_count, jurors)
}

/// Draws `size` jurors uniformly without replacement: Fisher–Yates over the
/// pool sorted by id, keeping the first `size` positions.
pub fn jury_open(pool: &[UserId], size: usize, rng: &mut SplitMix64) -> Result<Vec<UserId>, ProcedureError> {
    if pool.is_empty() {
        return Err(ProcedureError::EmptyPool);
    }
    if size > pool.len() {
        return Err(ProcedureError::JuryTooLarge { requested: size, pool: pool.len() });
    }
    if size == 0 {
        return Err(ProcedureError::BadSetting { name: "no_of_jurors", detail: "must be at least 1".into() });
    }
    let mut order = pool.to_vec();
    order.sort();
    for i in (1..order.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        order.swap(i, j);
    }
    order.truncate(size);
    Ok(order)
}

/// Pending until the dictator votes.
pub fn dictator_check(dictator_ballot: Option<bool>) -> Status {
    match dictator_ballot {
        None => Status::Pending,
        Some(true) => Status::Passed,
        Some(false) => Status::Failed,
    }
}

pub fn quadratic_cost(votes: i64) -> i128 {
    i128::from(votes) * i128::from(votes)
}

pub fn validate_quadratic(votes: i64, budget: f64) -> Result<i128, ProcedureError> {
    let cost = quadratic_cost(votes);
    if cost as f64 > budget {
        return Err(ProcedureError::BudgetExceeded { votes, cost, budget });
    }
    Ok(cost)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuadraticOutcome {
    pub status: Status,
    pub net_support: i64,
    pub credits_spent: BTreeMap<UserId, i128>,
}

/// Decides once everyone voted (or at close): passes on strictly positive net
/// support.
pub fn quadratic_check(
    ballots: &BTreeMap<UserId, i64>,
    budget: f64,
    eligible_count: usize,
    closing: bool,
) -> Result<QuadraticOutcome, ProcedureError> {
    let mut credits_spent = BTreeMap::new();
    for (voter, &votes) in ballots {
        credits_spent.insert(voter.clone(), validate_quadratic(votes, budget)?);
    }
    let net_support: i64 = ballots.values().sum();
    let status = if closing || ballots.len() >= eligible_count {
        if net_support > 0 {
            Status::Passed
        } else {
            Status::Failed
        }
    } else {
        Status::Pending
    };
    Ok(QuadraticOutcome { status, net_support, credits_spent })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckInput<'a> {
    pub ballots: &'a BTreeMap<UserId, BallotContent>,
    pub settings: &'a BTreeMap<String, Value>,
    pub eligible: &'a [UserId],
    pub closing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub status: Status,
    /// Values for the procedure's declared variables.
    pub outputs: BTreeMap<String, Value>,
}

fn number(settings: &BTreeMap<String, Value>, name: &'static str) -> Result<f64, ProcedureError> {
    settings
        .get(name)
        .and_then(Value::as_number)
        .ok_or_else(|| ProcedureError::BadSetting { name, detail: "missing or not a number".into() })
}

fn count_setting(settings: &BTreeMap<String, Value>, name: &'static str) -> Result<usize, ProcedureError> {
    let n = number(settings, name)?;
    if n < 0.0 || n.fract() != 0.0 {
        return Err(ProcedureError::BadSetting { name, detail: format!("{n} is not a whole number") });
    }
    Ok(n as usize)
}

fn threshold(settings: &BTreeMap<String, Value>) -> Result<f64, ProcedureError> {
    let t = number(settings, "threshold")?;
    if !(t > 0.0 && t <= 1.0) {
        return Err(ProcedureError::BadSetting { name: "threshold", detail: format!("{t} is outside (0, 1]") });
    }
    Ok(t)
}

fn text<'a>(settings: &'a BTreeMap<String, Value>, name: &str) -> Option<&'a str> {
    settings.get(name).and_then(Value::as_str)
}

fn candidates(settings: &BTreeMap<String, Value>) -> Result<&[UserId], ProcedureError> {
    match settings.get("candidates").and_then(Value::as_user_list) {
        Some(list) if !list.is_empty() => Ok(list),
        _ => Err(ProcedureError::NoCandidates),
    }
}

fn yes_no_ballots(ballots: &BTreeMap<UserId, BallotContent>) -> Vec<bool> {
    ballots
        .values()
        .filter_map(|b| match b {
            BallotContent::YesNo(yes) => Some(*yes),
            _ => None,
        })
        .collect()
}

fn num(n: usize) -> Value {
    Value::Number(n as f64)
}

impl ProcedureBehavior {
    pub fn ballot_form(self) -> BallotForm {
        use ProcedureBehavior::*;
        match self {
            Consensus | Majority | Jury | BenevolentDictator => BallotForm::YesNo,
            RankedVoting => BallotForm::Ranking,
            QuadraticVoting => BallotForm::Quadratic,
            LiquidDemocracy => BallotForm::Liquid,
        }
    }

    /// Checks settings the procedure needs before it can open.
    pub fn check_settings(self, settings: &BTreeMap<String, Value>) -> Result<(), ProcedureError> {
        use ProcedureBehavior::*;
        match self {
            Majority => threshold(settings).map(drop),
            Jury => {
                let jurors = count_setting(settings, "no_of_jurors")?;
                let needed = count_setting(settings, "threshold")?;
                if jurors == 0 {
                    return Err(ProcedureError::BadSetting { name: "no_of_jurors", detail: "must be at least 1".into() });
                }
                if needed == 0 || needed > jurors {
                    return Err(ProcedureError::BadSetting {
                        name: "threshold",
                        detail: format!("must be between 1 and the number of jurors ({jurors})"),
                    });
                }
                Ok(())
            }
            QuadraticVoting => {
                let budget = number(settings, "budget")?;
                if budget < 0.0 {
                    return Err(ProcedureError::BadSetting { name: "budget", detail: "must not be negative".into() });
                }
                Ok(())
            }
            Consensus | BenevolentDictator | RankedVoting | LiquidDemocracy => Ok(()),
        }
    }

    /// Computes the eligible voters when a proposal opens. Jury draws its
    /// jurors from `rng`.
    pub fn open(
        self,
        community: &CommunityState,
        settings: &BTreeMap<String, Value>,
        rng: &mut SplitMix64,
    ) -> Result<Vec<UserId>, ProcedureError> {
        self.check_settings(settings)?;
        let members = || community.members_matching(text(settings, "eligible_role"), text(settings, "eligible_channel"));
        match self {
            ProcedureBehavior::BenevolentDictator => {
                let dictator = text(settings, "dictator")
                    .ok_or_else(|| ProcedureError::BadSetting { name: "dictator", detail: "missing".into() })?;
                if !community.users.contains_key(dictator) {
                    return Err(ProcedureError::UnknownDictator(dictator.to_owned()));
                }
                Ok(vec![dictator.to_owned()])
            }
            ProcedureBehavior::Jury => jury_open(&members(), count_setting(settings, "no_of_jurors")?, rng),
            ProcedureBehavior::RankedVoting => {
                candidates(settings)?;
                Ok(members())
            }
            _ => Ok(members()),
        }
    }

    /// Procedure-specific ballot rules, applied when a ballot is cast.
    pub fn validate_ballot(
        self,
        voter: &str,
        content: &BallotContent,
        settings: &BTreeMap<String, Value>,
        eligible: &[UserId],
    ) -> Result<(), ProcedureError> {
        match content {
            BallotContent::Ranking(ranking) => ranked::validate_ranking(ranking, candidates(settings)?),
            BallotContent::Quadratic(votes) => validate_quadratic(*votes, number(settings, "budget")?).map(drop),
            BallotContent::Delegate(target) => liquid::validate_delegation(voter, target, eligible),
            BallotContent::YesNo(_) => Ok(()),
        }
    }

    pub fn check(self, input: &CheckInput<'_>) -> Result<CheckOutcome, ProcedureError> {
        use ProcedureBehavior::*;
        let CheckInput { ballots, settings, eligible, closing } = *input;
        let mut outputs = BTreeMap::new();
        let status = match self {
            Consensus | Majority | Jury => {
                let votes = yes_no_ballots(ballots);
                let outcome = match self {
                    Consensus => consensus_check(&votes, eligible.len()),
                    Majority => majority_check(&votes, threshold(settings)?, eligible.len()),
                    _ => jury_check(&votes, count_setting(settings, "threshold")?, eligible.len()),
                };
                outputs.insert("yes_votes".into(), num(outcome.yes_votes));
                outputs.insert("no_votes".into(), num(outcome.no_votes));
                let list_name = if self == Jury { "jurors" } else { "voters" };
                outputs.insert(list_name.into(), Value::UserList(eligible.to_vec()));
                outcome.status
            }
            BenevolentDictator => {
                let vote = eligible.first().and_then(|d| match ballots.get(d) {
                    Some(BallotContent::YesNo(yes)) => Some(*yes),
                    _ => None,
                });
                outputs.insert("approved".into(), Value::Boolean(vote == Some(true)));
                dictator_check(vote)
            }
            RankedVoting => {
                if !closing && ballots.len() < eligible.len() {
                    Status::Pending
                } else {
                    let rankings: Vec<Vec<UserId>> = ballots
                        .values()
                        .filter_map(|b| match b {
                            BallotContent::Ranking(r) => Some(r.clone()),
                            _ => None,
                        })
                        .collect();
                    let result = instant_runoff(candidates(settings)?, &rankings)?;
                    outputs.insert("winner".into(), Value::User(result.winner));
                    outputs.insert("rounds".into(), num(result.rounds));
                    Status::Passed
                }
            }
            QuadraticVoting => {
                let votes: BTreeMap<UserId, i64> = ballots
                    .iter()
                    .filter_map(|(voter, b)| match b {
                        BallotContent::Quadratic(v) => Some((voter.clone(), *v)),
                        _ => None,
                    })
                    .collect();
                let outcome = quadratic_check(&votes, number(settings, "budget")?, eligible.len(), closing)?;
                outputs.insert("net_support".into(), Value::Number(outcome.net_support as f64));
                let spent: i128 = outcome.credits_spent.values().sum();
                outputs.insert("credits_spent".into(), Value::Number(spent as f64));
                outcome.status
            }
            LiquidDemocracy => {
                let liquid: BTreeMap<UserId, LiquidBallot> = ballots
                    .iter()
                    .filter_map(|(voter, b)| {
                        let ballot = match b {
                            BallotContent::YesNo(yes) => LiquidBallot::Vote(*yes),
                            BallotContent::Delegate(target) => LiquidBallot::Delegate(target.clone()),
                            _ => return None,
                        };
                        Some((voter.clone(), ballot))
                    })
                    .collect();
                let t = resolve_delegations(&liquid, eligible);
                outputs.insert("yes_weight".into(), num(t.yes_weight));
                outputs.insert("no_weight".into(), num(t.no_weight));
                outputs.insert("discarded_weight".into(), num(t.discarded_weight));
                if !closing && liquid.len() < eligible.len() {
                    Status::Pending
                } else if t.yes_weight > t.no_weight {
                    Status::Passed
                } else {
                    Status::Failed
                }
            }
        };
        let status = if closing && status == Status::Pending { Status::Failed } else { status };
        Ok(CheckOutcome { status, outputs })
    }
}
