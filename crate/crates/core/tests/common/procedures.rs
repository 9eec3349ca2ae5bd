use std::collections::{BTreeMap, BTreeSet};

use pika_core::procedures::liquid::{resolve_delegations, LiquidBallot, LiquidTally};
use pika_core::procedures::ranked::instant_runoff;
use pika_core::procedures::{
    jury_open, majority_check, quadratic_check, quadratic_cost, validate_quadratic, ProcedureError, Status,
};
use pika_core::rng::SplitMix64;
use proptest::prelude::*;

/// Instant runoff by repeated elimination over a set of survivors. Ties for
/// last place eliminate the lexically smallest name.
pub fn irv_oracle(candidates: &[String], ballots: &[Vec<String>]) -> String {
    let mut alive: BTreeSet<String> = candidates.iter().cloned().collect();
    loop {
        let mut tally: BTreeMap<&String, usize> = alive.iter().map(|c| (c, 0)).collect();
        for ballot in ballots {
            if let Some(top) = ballot.iter().find(|c| alive.contains(*c)) {
                *tally.get_mut(top).unwrap() += 1;
            }
        }
        let total: usize = tally.values().sum();
        for (c, n) in &tally {
            if *n * 2 > total {
                return (*c).clone();
            }
        }
        if alive.len() == 1 {
            return alive.into_iter().next().unwrap();
        }
        let low = tally.values().copied().min().unwrap();
        let loser = tally.iter().find(|(_, n)| **n == low).map(|(c, _)| (*c).clone()).unwrap();
        alive.remove(&loser);
    }
}

/// Resolves delegations by relaxation: in round k every voter adopts what
/// their delegate held in round k-1. Chains resolve within n rounds; cycles
/// and dangling chains never do.
pub fn liquid_oracle(ballots: &BTreeMap<String, LiquidBallot>, eligible: &[String]) -> LiquidTally {
    let mut resolved: BTreeMap<&String, Option<bool>> = eligible
        .iter()
        .map(|v| (v, match ballots.get(v) { Some(LiquidBallot::Vote(b)) => Some(*b), _ => None }))
        .collect();
    for _ in 0..eligible.len() {
        let previous = resolved.clone();
        for v in eligible {
            if let Some(LiquidBallot::Delegate(t)) = ballots.get(v) {
                resolved.insert(v, previous.get(t).copied().flatten());
            }
        }
    }
    let mut tally = LiquidTally::default();
    for choice in resolved.values() {
        match choice {
            Some(true) => tally.yes_weight += 1,
            Some(false) => tally.no_weight += 1,
            None => tally.discarded_weight += 1,
        }
    }
    tally
}

fn names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i}")).collect()
}

pub type LiquidCase = (Vec<String>, BTreeMap<String, LiquidBallot>);

pub fn liquid_case() -> impl Strategy<Value = LiquidCase> {
    (1usize..9).prop_flat_map(|n| {
        let choice = prop_oneof![
            Just(None),
            any::<bool>().prop_map(|b| Some(LiquidBallot::Vote(b))),
            (0..n).prop_map(|t| Some(LiquidBallot::Delegate(format!("v{t}")))),
        ];
        proptest::collection::vec(choice, n).prop_map(move |choices| {
            let eligible = names(n);
            let ballots = eligible
                .iter()
                .zip(choices)
                .filter_map(|(v, c)| match c {
                    Some(LiquidBallot::Delegate(t)) if &t == v => None,
                    Some(b) => Some((v.clone(), b)),
                    None => None,
                })
                .collect();
            (eligible, ballots)
        })
    })
}

pub fn check_liquid((eligible, ballots): &LiquidCase) -> Result<(), String> {
    let tally = resolve_delegations(ballots, eligible);
    if tally.yes_weight + tally.no_weight + tally.discarded_weight != eligible.len() {
        return Err(format!("weight not conserved: {tally:?} over {} voters", eligible.len()));
    }
    let expected = liquid_oracle(ballots, eligible);
    if tally != expected {
        return Err(format!("{tally:?} but oracle says {expected:?} for {ballots:?}"));
    }
    Ok(())
}

pub type RankingCase = (Vec<String>, Vec<Vec<String>>);

/// At most four candidates and six complete ballots.
pub fn ranking_case() -> impl Strategy<Value = RankingCase> {
    (1usize..=4).prop_flat_map(|c| {
        let candidates: Vec<String> = (0..c).map(|i| ((b'a' + i as u8) as char).to_string()).collect();
        let ballot = Just(candidates.clone()).prop_shuffle();
        (Just(candidates), proptest::collection::vec(ballot, 1..=6))
    })
}

pub fn check_irv((candidates, ballots): &RankingCase) -> Result<(), String> {
    let ours = instant_runoff(candidates, ballots).map_err(|e| e.to_string())?.winner;
    let expected = irv_oracle(candidates, ballots);
    if ours != expected {
        return Err(format!("winner {ours} but oracle says {expected} for {ballots:?}"));
    }
    Ok(())
}

/// Every profile of three ballots over three candidates.
pub fn check_irv_exhaustive() -> Result<usize, String> {
    let candidates: Vec<String> = ["a", "b", "c"].map(String::from).to_vec();
    let orders: Vec<Vec<String>> = [["a", "b", "c"], ["a", "c", "b"], ["b", "a", "c"], ["b", "c", "a"], ["c", "a", "b"], ["c", "b", "a"]]
        .iter()
        .map(|o| o.map(String::from).to_vec())
        .collect();
    let mut checked = 0;
    for x in &orders {
        for y in &orders {
            for z in &orders {
                check_irv(&(candidates.clone(), vec![x.clone(), y.clone(), z.clone()]))?;
                checked += 1;
            }
        }
    }
    Ok(checked)
}

pub type MajorityCase = (Vec<bool>, usize, f64, prop::sample::Index);

pub fn majority_case() -> impl Strategy<Value = MajorityCase> {
    (proptest::collection::vec(any::<bool>(), 0..8), 0usize..4, 0.05f64..=1.0, any::<prop::sample::Index>())
        .prop_filter("someone is eligible", |(ballots, extra, _, _)| ballots.len() + extra > 0)
}

pub fn check_majority((ballots, extra, threshold, flip): &MajorityCase) -> Result<(), String> {
    let eligible = ballots.len() + extra;
    let base = majority_check(ballots, *threshold, eligible).status;
    // Turning a no into a yes never hurts; a yes into a no never helps.
    if !ballots.is_empty() {
        let i = flip.index(ballots.len());
        let mut changed = ballots.clone();
        changed[i] = !changed[i];
        let after = majority_check(&changed, *threshold, eligible).status;
        let broken = if ballots[i] {
            base == Status::Failed && after != Status::Failed
        } else {
            (base == Status::Passed && after != Status::Passed) || (base == Status::Pending && after == Status::Failed)
        };
        if broken {
            return Err(format!("flipping ballot {i} of {ballots:?} moved {base:?} to {after:?}"));
        }
    }
    let stricter = majority_check(ballots, (threshold + 0.1).min(1.0), eligible).status;
    if base != Status::Passed && stricter == Status::Passed {
        return Err(format!("raising the threshold moved {base:?} to {stricter:?}"));
    }
    let yes = ballots.iter().filter(|b| **b).count();
    if (base == Status::Passed) != (yes as f64 >= threshold * eligible as f64 - 1e-9) {
        return Err(format!("{yes} yes of {eligible} at {threshold} gave {base:?}"));
    }
    Ok(())
}

pub type QuadraticCase = (BTreeMap<String, i64>, u32, usize);

pub fn quadratic_case() -> impl Strategy<Value = QuadraticCase> {
    (proptest::collection::btree_map("[a-e]", -12i64..=12, 0..5), 0u32..100, 0usize..3)
}

pub fn check_quadratic((votes, budget, extra): &QuadraticCase) -> Result<(), String> {
    let budget = f64::from(*budget);
    for &v in votes.values() {
        if quadratic_cost(v) != i128::from(v) * i128::from(v) {
            return Err(format!("cost of {v} is {}", quadratic_cost(v)));
        }
        if validate_quadratic(v, budget).is_ok() != ((v * v) as f64 <= budget) {
            return Err(format!("{v} votes against budget {budget} misjudged"));
        }
    }
    let over = votes.values().any(|v| (v * v) as f64 > budget);
    match quadratic_check(votes, budget, votes.len() + extra, true) {
        Err(ProcedureError::BudgetExceeded { .. }) if over => Ok(()),
        Err(other) => Err(format!("unexpected {other}")),
        Ok(_) if over => Err(format!("{votes:?} accepted over budget {budget}")),
        Ok(outcome) => {
            let spent: i128 = outcome.credits_spent.values().sum();
            let expected: i128 = votes.values().map(|v| i128::from(v * v)).sum();
            let net: i64 = votes.values().sum();
            if spent != expected || outcome.net_support != net || (outcome.status == Status::Passed) != (net > 0) {
                return Err(format!("{votes:?} tallied as {outcome:?}"));
            }
            Ok(())
        }
    }
}

/// Draws pairs from a pool of five with one stream per proposal ordinal and
/// requires each of the ten pairs within 15% of its expected frequency.
pub fn check_jury_uniformity(draws: u64) -> Result<(), String> {
    let pool = names(5);
    let mut counts: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    for ordinal in 1..=draws {
        let mut rng = SplitMix64::for_proposal(42, ordinal);
        let mut pair = jury_open(&pool, 2, &mut rng).map_err(|e| e.to_string())?;
        pair.sort();
        *counts.entry(pair).or_default() += 1;
    }
    let expected = draws as f64 / 10.0;
    if counts.len() != 10 {
        return Err(format!("only {} distinct pairs", counts.len()));
    }
    for (pair, n) in &counts {
        if (*n as f64 - expected).abs() > 0.15 * expected {
            return Err(format!("{pair:?} drawn {n} times, expected about {expected}"));
        }
    }
    Ok(())
}
