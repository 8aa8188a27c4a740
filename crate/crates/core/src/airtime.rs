//! Airtime cost algebra.
//!
//! Every cost is expressed in microseconds: the test-frame size in bits
//! divided by a rate in Mb/s yields µs directly.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ids::NodeId;
use crate::num::Scalar;

/// Tolerance on `w1 + w2 = 1`.
pub const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AirtimeError {
    /// The `1 / (1 - e)` retransmission factor is singular for `e >= 1`.
    #[error("degenerate error probability (must be < 1)")]
    Degenerate,
    #[error("invalid link sample: {0}")]
    InvalidSample(&'static str),
    #[error("invalid airtime parameter: {0}")]
    InvalidParam(&'static str),
    #[error("weights must sum to 1 and lie in [0, 1]")]
    Weight,
    #[error("costs must be non-negative")]
    NegativeCost,
}

/// Per-frame constants of the airtime metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AirtimeParams<T> {
    /// Channel access overhead, µs.
    pub o_ca_us: T,
    /// Protocol overhead, µs.
    pub o_p_us: T,
    /// Test frame size, bits.
    pub b_t_bits: T,
}

impl<T: Scalar> AirtimeParams<T> {
    pub fn new(o_ca_us: T, o_p_us: T, b_t_bits: T) -> Result<Self, AirtimeError> {
        let zero = T::zero();
        if !(o_ca_us > zero) {
            return Err(AirtimeError::InvalidParam("o_ca_us"));
        }
        if !(o_p_us > zero) {
            return Err(AirtimeError::InvalidParam("o_p_us"));
        }
        if !(b_t_bits > zero) {
            return Err(AirtimeError::InvalidParam("b_t_bits"));
        }
        Ok(AirtimeParams { o_ca_us, o_p_us, b_t_bits })
    }

    /// 802.11b reference constants: 335 µs, 364 µs, 8224 bits.
    pub fn dot11b() -> Self {
        AirtimeParams {
            o_ca_us: T::lit(335.0),
            o_p_us: T::lit(364.0),
            b_t_bits: T::lit(8224.0),
        }
    }

    fn overhead(&self) -> T {
        self.o_ca_us + self.o_p_us
    }
}

impl<T: Scalar> Default for AirtimeParams<T> {
    fn default() -> Self {
        Self::dot11b()
    }
}

/// Rate and frame error rate of one station link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationLinkSample<T> {
    pub rate_mbps: T,
    pub error_prob: T,
}

impl<T: Scalar> StationLinkSample<T> {
    pub fn new(rate_mbps: T, error_prob: T) -> Self {
        StationLinkSample { rate_mbps, error_prob }
    }

    fn check(&self) -> Result<(), AirtimeError> {
        if self.error_prob >= T::one() {
            return Err(AirtimeError::Degenerate);
        }
        if self.error_prob < T::zero() {
            return Err(AirtimeError::InvalidSample("error_prob < 0"));
        }
        if !(self.rate_mbps > T::zero()) {
            return Err(AirtimeError::InvalidSample("rate_mbps <= 0"));
        }
        Ok(())
    }
}

/// Expected channel occupancy of one test frame on a station link:
/// `(O_ca + O_p + B_t / r) / (1 - e)`.
pub fn station_airtime<T: Scalar>(
    params: &AirtimeParams<T>,
    sample: StationLinkSample<T>,
) -> Result<T, AirtimeError> {
    sample.check()?;
    Ok((params.overhead() + params.b_t_bits / sample.rate_mbps) / (T::one() - sample.error_prob))
}

/// Uplink load of a cell. `avg_rate` is the rate whose reciprocal equals the
/// cell mean of `1 / r` (the harmonic mean), so `B_t / avg_rate` is the mean
/// per-station transfer time.
pub fn uplink_load<T: Scalar>(
    params: &AirtimeParams<T>,
    avg_rate: T,
    avg_error: T,
    n_stations: usize,
) -> Result<T, AirtimeError> {
    if avg_error >= T::one() {
        return Err(AirtimeError::Degenerate);
    }
    if n_stations == 0 {
        return Ok(T::zero());
    }
    let per_station = station_airtime(params, StationLinkSample::new(avg_rate, avg_error))?;
    Ok(per_station * T::from_count(n_stations))
}

/// Downlink load of a cell:
/// `(O_ca + O_p) Σ 1/(1-e_j) + B_t Σ 1/(r_j (1-e_j))`.
pub fn downlink_load<T: Scalar>(
    params: &AirtimeParams<T>,
    samples: &[StationLinkSample<T>],
) -> Result<T, AirtimeError> {
    let mut retx_sum = T::zero();
    let mut transfer_sum = T::zero();
    for s in samples {
        s.check()?;
        let success = T::one() - s.error_prob;
        retx_sum = retx_sum + T::one() / success;
        transfer_sum = transfer_sum + T::one() / (s.rate_mbps * success);
    }
    Ok(params.overhead() * retx_sum + params.b_t_bits * transfer_sum)
}

/// Checks `w1 + w2 = 1` (within [`WEIGHT_TOLERANCE`]) with both in `[0, 1]`.
pub fn check_weights<T: Scalar>(w1: T, w2: T) -> Result<(), AirtimeError> {
    let zero = T::zero();
    let one = T::one();
    if w1 < zero || w2 < zero || w1 > one || w2 > one {
        return Err(AirtimeError::Weight);
    }
    if (w1 + w2).abs_diff(one) > T::lit(WEIGHT_TOLERANCE) {
        return Err(AirtimeError::Weight);
    }
    Ok(())
}

/// Weighted end-to-end cost `(AC_up + AC_down) w1 + RC w2`.
pub fn total_cost<T: Scalar>(ac_up: T, ac_down: T, rc: T, w1: T, w2: T) -> Result<T, AirtimeError> {
    check_weights(w1, w2)?;
    if ac_up < T::zero() || ac_down < T::zero() || rc < T::zero() {
        return Err(AirtimeError::NegativeCost);
    }
    Ok((ac_up + ac_down) * w1 + rc * w2)
}

/// Load bookkeeping of one AP: its associated stations and the derived
/// uplink/downlink costs.
#[derive(Debug, Clone, PartialEq)]
pub struct ApLoadState<T> {
    pub associated: BTreeSet<NodeId>,
    pub uplink_cost_us: T,
    pub downlink_cost_us: T,
    /// Harmonic-mean uplink rate over associated stations.
    pub avg_up_rate_mbps: T,
    pub avg_up_error: T,
    /// Downlink link samples, keyed by station.
    pub per_station_samples: BTreeMap<NodeId, StationLinkSample<T>>,
}

impl<T: Scalar> Default for ApLoadState<T> {
    fn default() -> Self {
        ApLoadState {
            associated: BTreeSet::new(),
            uplink_cost_us: T::zero(),
            downlink_cost_us: T::zero(),
            avg_up_rate_mbps: T::zero(),
            avg_up_error: T::zero(),
            per_station_samples: BTreeMap::new(),
        }
    }
}

impl<T: Scalar> ApLoadState<T> {
    /// Recomputes both costs from the current aggregates. An empty cell
    /// always has zero cost.
    pub fn recompute(&mut self, params: &AirtimeParams<T>) -> Result<(), AirtimeError> {
        if self.associated.is_empty() {
            self.uplink_cost_us = T::zero();
            self.downlink_cost_us = T::zero();
            return Ok(());
        }
        self.uplink_cost_us =
            uplink_load(params, self.avg_up_rate_mbps, self.avg_up_error, self.associated.len())?;
        let samples: Vec<_> = self
            .associated
            .iter()
            .filter_map(|id| self.per_station_samples.get(id).copied())
            .collect();
        self.downlink_cost_us = downlink_load(params, &samples)?;
        Ok(())
    }

    /// Cumulative association cost `C_up + C_down`.
    pub fn cumulative_cost(&self) -> T {
        self.uplink_cost_us + self.downlink_cost_us
    }
}
