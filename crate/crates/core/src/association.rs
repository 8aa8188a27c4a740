//! Association decision policies run by each station.

use thiserror::Error;

use crate::airtime::{check_weights, total_cost};
use crate::ids::{Channel, NodeId};
use crate::num::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AssocError {
    #[error("no candidate AP")]
    NoCandidates,
    #[error("candidate {0} lacks uplink/downlink cost")]
    MissingCost(NodeId),
    #[error("candidate {0} lacks route cost")]
    MissingRouteCost(NodeId),
    #[error("weights must sum to 1 and lie in [0, 1]")]
    Weight,
}

/// An AP as seen by a station at decision time.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateAp<T> {
    pub ap_id: NodeId,
    pub channel: Channel,
    pub rssi_dbm: T,
    pub uplink_cost_us: Option<T>,
    pub downlink_cost_us: Option<T>,
    pub route_cost_us: Option<T>,
    pub beacon_age_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum AssocCause {
    InitialJoin,
    PeriodicReassoc,
    BalancerTriggered,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssocDecision<T> {
    pub chosen_ap: NodeId,
    /// dBm for the signal-strength policy, µs for the cost policies.
    pub score: T,
    pub cause: AssocCause,
}

/// Scans candidates keeping the one for which `better(new, best)` holds;
/// equal scores go to the lower AP id.
fn pick<T: Scalar>(
    scored: impl Iterator<Item = (NodeId, T)>,
    better: impl Fn(T, T) -> bool,
) -> Option<(NodeId, T)> {
    let mut best: Option<(NodeId, T)> = None;
    for (id, s) in scored {
        best = match best {
            None => Some((id, s)),
            Some((bid, bs)) => {
                if better(s, bs) || (s == bs && id < bid) {
                    Some((id, s))
                } else {
                    Some((bid, bs))
                }
            }
        };
    }
    best
}

/// Strongest signal wins.
pub fn decide_rssi<T: Scalar>(
    candidates: &[CandidateAp<T>],
    cause: AssocCause,
) -> Result<AssocDecision<T>, AssocError> {
    let (chosen_ap, score) = pick(candidates.iter().map(|c| (c.ap_id, c.rssi_dbm)), |a, b| a > b)
        .ok_or(AssocError::NoCandidates)?;
    Ok(AssocDecision { chosen_ap, score, cause })
}

/// Association airtime cost of a candidate, `C_up + C_down`.
pub fn association_cost<T: Scalar>(c: &CandidateAp<T>) -> Result<T, AssocError> {
    match (c.uplink_cost_us, c.downlink_cost_us) {
        (Some(u), Some(d)) => Ok(u + d),
        _ => Err(AssocError::MissingCost(c.ap_id)),
    }
}

/// Minimum `C_up + C_down` wins.
pub fn decide_airtime<T: Scalar>(
    candidates: &[CandidateAp<T>],
    cause: AssocCause,
) -> Result<AssocDecision<T>, AssocError> {
    if candidates.is_empty() {
        return Err(AssocError::NoCandidates);
    }
    let scored = candidates
        .iter()
        .map(|c| association_cost(c).map(|s| (c.ap_id, s)))
        .collect::<Result<Vec<_>, _>>()?;
    let (chosen_ap, score) = pick(scored.into_iter(), |a, b| a < b).unwrap();
    Ok(AssocDecision { chosen_ap, score, cause })
}

/// Weighted end-to-end cost of one candidate.
pub fn crosslayer_cost<T: Scalar>(c: &CandidateAp<T>, w1: T, w2: T) -> Result<T, AssocError> {
    let (up, down) = match (c.uplink_cost_us, c.downlink_cost_us) {
        (Some(u), Some(d)) => (u, d),
        _ => return Err(AssocError::MissingCost(c.ap_id)),
    };
    let rc = c.route_cost_us.ok_or(AssocError::MissingRouteCost(c.ap_id))?;
    total_cost(up, down, rc, w1, w2).map_err(|_| AssocError::Weight)
}

/// Minimum weighted end-to-end cost wins.
pub fn decide_crosslayer<T: Scalar>(
    candidates: &[CandidateAp<T>],
    w1: T,
    w2: T,
    cause: AssocCause,
) -> Result<AssocDecision<T>, AssocError> {
    check_weights(w1, w2).map_err(|_| AssocError::Weight)?;
    if candidates.is_empty() {
        return Err(AssocError::NoCandidates);
    }
    let scored = candidates
        .iter()
        .map(|c| crosslayer_cost(c, w1, w2).map(|s| (c.ap_id, s)))
        .collect::<Result<Vec<_>, _>>()?;
    let (chosen_ap, score) = pick(scored.into_iter(), |a, b| a < b).unwrap();
    Ok(AssocDecision { chosen_ap, score, cause })
}

/// Hysteresis rule on cost scores: move only if the best alternative beats
/// the current AP by more than the fraction `hysteresis`.
pub fn should_reassociate<T: Scalar>(current_score: T, best_other_score: T, hysteresis: T) -> bool {
    best_other_score < current_score * (T::one() - hysteresis)
}
