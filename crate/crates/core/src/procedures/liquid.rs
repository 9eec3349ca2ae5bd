use std::collections::{BTreeMap, BTreeSet};

use crate::platform::UserId;

use super::ProcedureError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LiquidBallot {
    Vote(bool),
    Delegate(UserId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LiquidTally {
    pub yes_weight: usize,
    pub no_weight: usize,
    /// Weight caught in delegation cycles or ending at someone who never voted.
    pub discarded_weight: usize,
}

pub fn validate_delegation(voter: &str, target: &str, eligible: &[UserId]) -> Result<(), ProcedureError> {
    if voter == target {
        return Err(ProcedureError::SelfDelegation);
    }
    if !eligible.iter().any(|e| e == target) {
        return Err(ProcedureError::DelegateNotEligible(target.to_owned()));
    }
    Ok(())
}

/// Every eligible member carries weight one to the choice at the end of their
/// delegation chain.
pub fn resolve_delegations(ballots: &BTreeMap<UserId, LiquidBallot>, eligible: &[UserId]) -> LiquidTally {
    let mut tally = LiquidTally::default();
    for voter in eligible {
        let mut current = voter;
        let mut visited = BTreeSet::from([voter]);
        let choice = loop {
            match ballots.get(current) {
                Some(LiquidBallot::Vote(yes)) => break Some(*yes),
                Some(LiquidBallot::Delegate(target)) => {
                    if !visited.insert(target) {
                        break None;
                    }
                    current = target;
                }
                None => break None,
            }
        };
        match choice {
            Some(true) => tally.yes_weight += 1,
            Some(false) => tally.no_weight += 1,
            None => tally.discarded_weight += 1,
        }
    }
    tally
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eligible(s: &[&str]) -> Vec<UserId> {
        s.iter().map(|x| x.to_string()).collect()
    }

    fn ballots(entries: &[(&str, LiquidBallot)]) -> BTreeMap<UserId, LiquidBallot> {
        entries.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    fn to(target: &str) -> LiquidBallot {
        LiquidBallot::Delegate(target.into())
    }

    #[test]
    fn transitive_chain() {
        let b = ballots(&[("b", to("a")), ("c", to("b")), ("a", LiquidBallot::Vote(true))]);
        let t = resolve_delegations(&b, &eligible(&["a", "b", "c"]));
        assert_eq!(t, LiquidTally { yes_weight: 3, no_weight: 0, discarded_weight: 0 });
    }

    #[test]
    fn cycle_is_discarded() {
        let b = ballots(&[("a", to("b")), ("b", to("a")), ("c", LiquidBallot::Vote(false))]);
        let t = resolve_delegations(&b, &eligible(&["a", "b", "c"]));
        assert_eq!(t, LiquidTally { yes_weight: 0, no_weight: 1, discarded_weight: 2 });
    }

    #[test]
    fn chain_into_abstainer_is_discarded() {
        let b = ballots(&[("a", to("b"))]);
        let t = resolve_delegations(&b, &eligible(&["a", "b"]));
        assert_eq!(t.discarded_weight, 2);
    }

    #[test]
    fn delegation_rules() {
        let e = eligible(&["a", "b"]);
        assert_eq!(validate_delegation("a", "a", &e), Err(ProcedureError::SelfDelegation));
        assert_eq!(validate_delegation("a", "z", &e), Err(ProcedureError::DelegateNotEligible("z".into())));
        assert_eq!(validate_delegation("a", "b", &e), Ok(()));
    }
}
