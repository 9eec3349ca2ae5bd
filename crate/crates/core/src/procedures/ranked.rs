use std::collections::BTreeSet;

use crate::platform::UserId;

use super::ProcedureError;

/// A ranking must list every candidate exactly once.
pub fn validate_ranking(ranking: &[UserId], candidates: &[UserId]) -> Result<(), ProcedureError> {
    let ranked: BTreeSet<&UserId> = ranking.iter().collect();
    let expected: BTreeSet<&UserId> = candidates.iter().collect();
    if ranked.len() != ranking.len() || ranked != expected {
        return Err(ProcedureError::BallotNotTotalOrder);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunoffResult {
    pub winner: UserId,
    pub rounds: usize,
    /// Candidates in the order they were eliminated.
    pub eliminated: Vec<UserId>,
}

/// Instant runoff over complete rankings.
///
/// Each round counts every ballot for its highest-ranked remaining candidate.
/// A candidate holding a strict majority of the ballots, or the last one
/// standing, wins. Otherwise the candidate with the fewest first choices is
/// eliminated; ties go against the smallest candidate id.
pub fn instant_runoff(candidates: &[UserId], ballots: &[Vec<UserId>]) -> Result<RunoffResult, ProcedureError> {
    if candidates.is_empty() {
        return Err(ProcedureError::NoCandidates);
    }
    if ballots.is_empty() {
        return Err(ProcedureError::NoBallots);
    }
    let mut remaining: Vec<UserId> = candidates.to_vec();
    remaining.sort();
    remaining.dedup();
    let mut eliminated = Vec::new();
    let mut rounds = 0;
    loop {
        rounds += 1;
        let mut counts = vec![0usize; remaining.len()];
        for ballot in ballots {
            if let Some(idx) = ballot.iter().find_map(|c| remaining.iter().position(|r| r == c)) {
                counts[idx] += 1;
            }
        }
        let active: usize = counts.iter().sum();
        if let Some(idx) = counts.iter().position(|&n| 2 * n > active) {
            return Ok(RunoffResult { winner: remaining[idx].clone(), rounds, eliminated });
        }
        if remaining.len() == 1 {
            return Ok(RunoffResult { winner: remaining.remove(0), rounds, eliminated });
        }
        // `remaining` is sorted, so the first minimum is the smallest id.
        let fewest = *counts.iter().min().expect("non-empty");
        let loser = counts.iter().position(|&n| n == fewest).expect("minimum exists");
        eliminated.push(remaining.remove(loser));
    }
}
