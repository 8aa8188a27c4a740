//! Synthetic radio model: distance to rate, frame error probability and
//! RSSI, plus carrier-sense contention domains.
//!
//! Access links use the 802.11b rate set with fixed range thresholds.
//! Frame error grows quadratically with distance relative to the largest
//! usable range, `e = clamp(base_e * (d / d_max)^2, 0, 0.9)`. RSSI follows a
//! log-distance law with exponent 3 and -40 dBm at 1 m.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ids::{Channel, NodeId, Position};

/// Access rate set, fastest first.
pub const ACCESS_RATES_MBPS: [f64; 4] = [11.0, 5.5, 2.0, 1.0];
/// Rates allowed on backbone links.
pub const BACKBONE_RATES_MBPS: [f64; 2] = [6.0, 12.0];
/// Ceiling on synthesized frame error probability.
pub const MAX_ERROR_PROB: f64 = 0.9;

const REF_RSSI_DBM: f64 = -40.0;
const PATH_LOSS_EXPONENT: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("link of {distance_m:.1} m exceeds maximum range {max_m:.1} m")]
    OutOfRange { distance_m: f64, max_m: f64 },
    #[error("invalid channel {0}")]
    InvalidChannel(u8),
    #[error("non-finite position")]
    NonFinitePosition,
    #[error("unsupported backbone rate {0} Mb/s")]
    BackboneRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkQuality {
    pub rate_mbps: f64,
    pub error_prob: f64,
    pub rssi_dbm: f64,
}

/// Set of co-channel radios sharing one medium.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentionDomain {
    pub channel: Channel,
    pub members: BTreeSet<NodeId>,
}

/// A radio participating in contention-domain computation. Radios without
/// a channel (idle stations) are ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Radio {
    pub id: NodeId,
    pub position: Position,
    pub channel: Option<Channel>,
}

/// Constants of the synthetic model. All are scenario-overridable.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    /// Range below which each rate of [`ACCESS_RATES_MBPS`] is usable, m.
    pub rate_thresholds_m: [f64; 4],
    pub base_error: f64,
    pub cs_range_m: f64,
    pub backbone_base_error: f64,
    pub backbone_range_m: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        ChannelModel {
            rate_thresholds_m: [50.0, 80.0, 120.0, 160.0],
            base_error: 0.1,
            cs_range_m: 250.0,
            backbone_base_error: 0.05,
            backbone_range_m: 400.0,
        }
    }
}

pub fn rssi_dbm(distance_m: f64) -> f64 {
    REF_RSSI_DBM - 10.0 * PATH_LOSS_EXPONENT * distance_m.max(1.0).log10()
}

fn quadratic_error(base: f64, distance_m: f64, max_m: f64) -> f64 {
    let ratio = distance_m / max_m;
    (base * ratio * ratio).clamp(0.0, MAX_ERROR_PROB)
}

impl ChannelModel {
    /// Largest distance at which an access link works at all.
    pub fn max_access_range_m(&self) -> f64 {
        self.rate_thresholds_m[3]
    }

    pub fn validate(&self) -> Result<(), String> {
        let t = &self.rate_thresholds_m;
        if !(t[0] > 0.0 && t.windows(2).all(|w| w[0] < w[1]) && t.iter().all(|x| x.is_finite())) {
            return Err("rate_thresholds_m must be positive, finite and strictly increasing".into());
        }
        if !(0.0..1.0).contains(&self.base_error) {
            return Err("base_error must lie in [0, 1)".into());
        }
        if !(0.0..1.0).contains(&self.backbone_base_error) {
            return Err("backbone_base_error must lie in [0, 1)".into());
        }
        if !(self.cs_range_m > 0.0 && self.cs_range_m.is_finite()) {
            return Err("cs_range_m must be positive".into());
        }
        if !(self.backbone_range_m > 0.0 && self.backbone_range_m.is_finite()) {
            return Err("backbone_range_m must be positive".into());
        }
        Ok(())
    }

    /// Quality of an access link. Symmetric in its endpoints.
    pub fn link_quality(
        &self,
        tx: Position,
        rx: Position,
        channel: Channel,
    ) -> Result<LinkQuality, ChannelError> {
        if !channel.is_valid() {
            return Err(ChannelError::InvalidChannel(channel.0));
        }
        if !tx.is_finite() || !rx.is_finite() {
            return Err(ChannelError::NonFinitePosition);
        }
        let d = tx.distance(&rx);
        let max_m = self.max_access_range_m();
        let rate_mbps = self
            .rate_thresholds_m
            .iter()
            .zip(ACCESS_RATES_MBPS)
            .find(|(&limit, _)| limit > d)
            .map(|(_, r)| r)
            .ok_or(ChannelError::OutOfRange { distance_m: d, max_m })?;
        Ok(LinkQuality {
            rate_mbps,
            error_prob: quadratic_error(self.base_error, d, max_m),
            rssi_dbm: rssi_dbm(d),
        })
    }

    /// Quality of a backbone link running at its nominal rate.
    pub fn backbone_quality(
        &self,
        a: Position,
        b: Position,
        nominal_rate_mbps: f64,
    ) -> Result<LinkQuality, ChannelError> {
        if !BACKBONE_RATES_MBPS.contains(&nominal_rate_mbps) {
            return Err(ChannelError::BackboneRate(nominal_rate_mbps));
        }
        if !a.is_finite() || !b.is_finite() {
            return Err(ChannelError::NonFinitePosition);
        }
        let d = a.distance(&b);
        if d > self.backbone_range_m {
            return Err(ChannelError::OutOfRange { distance_m: d, max_m: self.backbone_range_m });
        }
        Ok(LinkQuality {
            rate_mbps: nominal_rate_mbps,
            error_prob: quadratic_error(self.backbone_base_error, d, self.backbone_range_m),
            rssi_dbm: rssi_dbm(d),
        })
    }
}

/// Groups co-channel radios into carrier-sense domains: two radios on the
/// same channel within `cs_range_m` share a domain, and membership is closed
/// transitively. Output is sorted by channel, then smallest member id.
pub fn contention_domains(radios: &[Radio], cs_range_m: f64) -> Vec<ContentionDomain> {
    let mut by_channel: BTreeMap<Channel, Vec<&Radio>> = BTreeMap::new();
    for r in radios {
        if let Some(c) = r.channel {
            by_channel.entry(c).or_default().push(r);
        }
    }
    let mut out = Vec::new();
    for (channel, mut group) in by_channel {
        group.sort_by_key(|r| r.id);
        let mut parent: Vec<usize> = (0..group.len()).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for i in 0..group.len() {
            for j in (i + 1)..group.len() {
                if group[i].position.distance(&group[j].position) <= cs_range_m {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    if ri != rj {
                        parent[ri.max(rj)] = ri.min(rj);
                    }
                }
            }
        }
        let mut clusters: BTreeMap<usize, BTreeSet<NodeId>> = BTreeMap::new();
        for (i, r) in group.iter().enumerate() {
            let root = find(&mut parent, i);
            clusters.entry(root).or_default().insert(r.id);
        }
        let mut domains: Vec<_> = clusters
            .into_values()
            .map(|members| ContentionDomain { channel, members })
            .collect();
        domains.sort_by_key(|d| d.members.iter().next().copied());
        out.extend(domains);
    }
    out
}
