//! Neighborhood balancing index, inter-AP load advertisement and the
//! station-side weight adaptation heuristic.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ids::NodeId;
use crate::num::{max_of, min_of, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BalancerError {
    #[error("neighborhood contains no AP")]
    EmptyNeighborhood,
    #[error("AP cost must be non-negative")]
    NegativeCost,
    #[error("invalid balancer configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Cumulative association costs `AC_i = C_up + C_down` of the APs in one
/// neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodCosts<T> {
    pub ap_costs: BTreeMap<NodeId, T>,
    pub epoch_us: u64,
}

impl<T: Scalar> NeighborhoodCosts<T> {
    pub fn balancing_index(&self) -> Result<T, BalancerError> {
        let costs: Vec<T> = self.ap_costs.values().copied().collect();
        balancing_index(&costs)
    }
}

/// `b = (Σ AC)² / (n Σ AC²)`. An all-idle neighborhood is balanced (`b = 1`).
pub fn balancing_index<T: Scalar>(costs: &[T]) -> Result<T, BalancerError> {
    if costs.is_empty() {
        return Err(BalancerError::EmptyNeighborhood);
    }
    let mut sum = T::zero();
    let mut sum_sq = T::zero();
    for &c in costs {
        if c < T::zero() {
            return Err(BalancerError::NegativeCost);
        }
        sum = sum + c;
        sum_sq = sum_sq + c * c;
    }
    if sum_sq == T::zero() {
        return Ok(T::one());
    }
    Ok(sum * sum / (T::from_count(costs.len()) * sum_sq))
}

/// One round of load advertisement: every AP learns the cost of each of its
/// neighbors. APs absent from `all_ap_loads` are skipped; a missing
/// neighbor entry leaves a neighborhood of one.
pub fn laba_exchange<T: Scalar>(
    all_ap_loads: &BTreeMap<NodeId, T>,
    neighbor_map: &BTreeMap<NodeId, BTreeSet<NodeId>>,
    epoch_us: u64,
) -> BTreeMap<NodeId, NeighborhoodCosts<T>> {
    all_ap_loads
        .iter()
        .map(|(&ap, &own)| {
            let mut ap_costs = BTreeMap::new();
            ap_costs.insert(ap, own);
            if let Some(neighbors) = neighbor_map.get(&ap) {
                for n in neighbors {
                    if let Some(&c) = all_ap_loads.get(n) {
                        ap_costs.insert(*n, c);
                    }
                }
            }
            (ap, NeighborhoodCosts { ap_costs, epoch_us })
        })
        .collect()
}

/// Tunables of the weight heuristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalancerConfig<T> {
    pub threshold_t: T,
    pub w1_init: T,
    pub w1_max: T,
    pub step_delta: T,
    pub relax_patience: u32,
}

impl<T: Scalar> BalancerConfig<T> {
    pub fn validate(&self) -> Result<(), BalancerError> {
        let zero = T::zero();
        let one = T::one();
        if !(self.threshold_t > zero && self.threshold_t < one) {
            return Err(BalancerError::InvalidConfig("threshold_T must lie in (0, 1)"));
        }
        if self.w1_init < zero || self.w1_init > one {
            return Err(BalancerError::InvalidConfig("w1_init must lie in [0, 1]"));
        }
        if self.w1_max < self.w1_init || self.w1_max > one {
            return Err(BalancerError::InvalidConfig("w1_max must lie in [w1_init, 1]"));
        }
        if !(self.step_delta > zero) {
            return Err(BalancerError::InvalidConfig("step_delta must be positive"));
        }
        if self.relax_patience == 0 {
            return Err(BalancerError::InvalidConfig("relax_patience must be at least 1"));
        }
        Ok(())
    }
}

/// Balancing state. APs keep `b` up to date; stations keep the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancerState<T> {
    pub b: T,
    pub threshold_t: T,
    pub w1: T,
    pub w2: T,
    pub w1_init: T,
    pub w1_max: T,
    pub step_delta: T,
    pub relax_patience: u32,
    /// Consecutive balanced beacons heard since the last weight change.
    pub relax_count: u32,
}

impl<T: Scalar> BalancerState<T> {
    pub fn new(config: BalancerConfig<T>) -> Result<Self, BalancerError> {
        config.validate()?;
        Ok(BalancerState {
            b: T::one(),
            threshold_t: config.threshold_t,
            w1: config.w1_init,
            w2: T::one() - config.w1_init,
            w1_init: config.w1_init,
            w1_max: config.w1_max,
            step_delta: config.step_delta,
            relax_patience: config.relax_patience,
            relax_count: 0,
        })
    }

    /// Recomputes `b` from a fresh neighborhood view.
    pub fn update_index(&mut self, costs: &NeighborhoodCosts<T>) -> Result<T, BalancerError> {
        self.b = costs.balancing_index()?;
        Ok(self.b)
    }

    /// Value an AP places in its beacons.
    pub fn beacon_annotation(&self) -> T {
        self.b
    }

    /// Reacts to the index heard in a beacon: an unbalanced neighborhood
    /// raises `w1` by one step (capped at `w1_max`); `relax_patience`
    /// consecutive balanced beacons lower it by one step (floored at
    /// `w1_init`).
    pub fn adapt_weights(&mut self, heard_b: T) -> (T, T) {
        if heard_b < self.threshold_t {
            self.w1 = min_of(self.w1 + self.step_delta, self.w1_max);
            self.relax_count = 0;
        } else {
            self.relax_count += 1;
            if self.relax_count >= self.relax_patience {
                self.w1 = max_of(self.w1 - self.step_delta, self.w1_init);
                self.relax_count = 0;
            }
        }
        self.w2 = T::one() - self.w1;
        (self.w1, self.w2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    type Q = Ratio<i64>;

    fn cfg(t: f64) -> BalancerConfig<f64> {
        BalancerConfig {
            threshold_t: t,
            w1_init: 0.5,
            w1_max: 0.9,
            step_delta: 0.1,
            relax_patience: 3,
        }
    }

    #[test]
    fn two_ap_reference_cases() {
        assert_eq!(balancing_index(&[7.5, 7.5]).unwrap(), 1.0);
        assert_eq!(balancing_index(&[7.5, 0.0]).unwrap(), 0.5);
        assert_eq!(balancing_index(&[0.0, 3.0]).unwrap(), 0.5);
    }

    #[test]
    fn three_ap_exact() {
        let b = balancing_index(&[Q::from(1), Q::from(2), Q::from(3)]).unwrap();
        assert_eq!(b, Q::new(6, 7));
    }

    #[test]
    fn degenerate_neighborhoods() {
        assert_eq!(balancing_index::<f64>(&[]), Err(BalancerError::EmptyNeighborhood));
        assert_eq!(balancing_index(&[0.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(balancing_index(&[-1.0, 2.0]), Err(BalancerError::NegativeCost));
    }

    #[test]
    fn laba_two_neighbors_and_isolated() {
        let loads: BTreeMap<_, _> = [(NodeId(1), 10.0), (NodeId(2), 30.0), (NodeId(3), 5.0)].into();
        let mut nbr = BTreeMap::new();
        nbr.insert(NodeId(1), BTreeSet::from([NodeId(2)]));
        nbr.insert(NodeId(2), BTreeSet::from([NodeId(1)]));
        let hoods = laba_exchange(&loads, &nbr, 42);
        assert_eq!(hoods[&NodeId(1)].ap_costs.len(), 2);
        assert_eq!(hoods[&NodeId(1)].ap_costs, hoods[&NodeId(2)].ap_costs);
        assert_eq!(hoods[&NodeId(3)].ap_costs.len(), 1);
        assert_eq!(hoods[&NodeId(3)].balancing_index().unwrap(), 1.0);
        assert_eq!(hoods[&NodeId(3)].epoch_us, 42);
    }

    #[test]
    fn laba_clique_views_identical() {
        let ids = [1, 2, 3, 4].map(NodeId);
        let loads: BTreeMap<_, _> = ids.iter().map(|&i| (i, i.0 as f64 * 3.0)).collect();
        let nbr: BTreeMap<_, _> = ids
            .iter()
            .map(|&i| (i, ids.iter().copied().filter(|&j| j != i).collect::<BTreeSet<_>>()))
            .collect();
        let hoods = laba_exchange(&loads, &nbr, 0);
        let first = &hoods[&ids[0]].ap_costs;
        assert!(hoods.values().all(|h| &h.ap_costs == first));
    }

    #[test]
    fn beacon_annotation_follows_recompute() {
        let mut st = BalancerState::new(cfg(0.8)).unwrap();
        st.b = 0.7;
        assert_eq!(st.beacon_annotation(), 0.7);
        let hood = NeighborhoodCosts {
            ap_costs: [(NodeId(1), 4.0), (NodeId(2), 0.0)].into(),
            epoch_us: 0,
        };
        st.update_index(&hood).unwrap();
        assert_eq!(st.beacon_annotation(), 0.5);
    }

    #[test]
    fn adapt_raises_w1_when_unbalanced() {
        let mut st = BalancerState::new(cfg(0.8)).unwrap();
        let (w1, w2) = st.adapt_weights(0.4);
        assert!((w1 - 0.6).abs() < 1e-12 && (w2 - 0.4).abs() < 1e-12);
        assert_eq!(w1 + w2, 1.0);
    }

    #[test]
    fn adapt_saturates_at_cap() {
        let mut st = BalancerState::new(cfg(0.8)).unwrap();
        st.w1 = 0.9;
        st.w2 = 0.1;
        let (w1, _) = st.adapt_weights(0.3);
        assert_eq!(w1, 0.9);
    }

    #[test]
    fn adapt_relaxes_after_patience() {
        let mut st = BalancerState::new(cfg(0.8)).unwrap();
        st.adapt_weights(0.1);
        st.adapt_weights(0.1);
        let raised = st.w1;
        st.adapt_weights(0.95);
        st.adapt_weights(0.95);
        assert_eq!(st.w1, raised);
        st.adapt_weights(0.95);
        assert!((st.w1 - (raised - 0.1)).abs() < 1e-12);
        assert_eq!(st.relax_count, 0);
        for _ in 0..30 {
            st.adapt_weights(1.0);
        }
        assert_eq!(st.w1, 0.5);
    }

    #[test]
    fn config_validation() {
        assert!(BalancerState::new(cfg(1.0)).is_err());
        let mut c = cfg(0.8);
        c.w1_max = 0.4;
        assert!(c.validate().is_err());
        c = cfg(0.8);
        c.relax_patience = 0;
        assert!(c.validate().is_err());
    }
}
