//! Cooperative association: the per-station table of known APs, its
//! exchange between neighboring stations, and the handoff delay it saves.
//!
//! Wire form of a payload is a sequence of 25-byte records, little-endian:
//! `ap_mac: u64 | channel: u8 | load_us: u64 | timestamp_us: u64`, sorted
//! by ascending `ap_mac`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ids::{Channel, NodeId};

pub const RECORD_LEN: usize = 25;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoopError {
    #[error("payload length {0} is not a multiple of {RECORD_LEN}")]
    Truncated(usize),
    #[error("record {index}: invalid channel {channel}")]
    InvalidChannel { index: usize, channel: u8 },
    #[error("record {index}: ap_mac {mac} does not fit a node id")]
    InvalidMac { index: usize, mac: u64 },
    #[error("record {0}: ap_mac not in ascending order")]
    Unordered(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssocTableEntry {
    pub ap_mac: NodeId,
    pub channel: Channel,
    /// Cumulative uplink + downlink airtime cost, µs.
    pub load_us: u64,
    pub timestamp_us: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssocTable {
    pub owner: NodeId,
    pub entries: BTreeMap<NodeId, AssocTableEntry>,
}

impl AssocTable {
    pub fn new(owner: NodeId) -> Self {
        AssocTable { owner, entries: BTreeMap::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts unknown APs and replaces known ones only with strictly newer
    /// information.
    pub fn merge_received(&mut self, received: &[AssocTableEntry]) {
        for r in received {
            match self.entries.get(&r.ap_mac) {
                Some(existing) if existing.timestamp_us >= r.timestamp_us => {}
                _ => {
                    self.entries.insert(r.ap_mac, *r);
                }
            }
        }
    }

    /// APs whose record is fresh and not overloaded, least loaded first
    /// (ties by AP id).
    pub fn eligible_aps(
        &self,
        now_us: u64,
        staleness_us: u64,
        load_threshold_us: u64,
    ) -> Vec<(NodeId, Channel)> {
        let mut ok: Vec<&AssocTableEntry> = self
            .entries
            .values()
            .filter(|e| now_us.saturating_sub(e.timestamp_us) <= staleness_us)
            .filter(|e| e.load_us <= load_threshold_us)
            .collect();
        ok.sort_by_key(|e| (e.load_us, e.ap_mac));
        ok.into_iter().map(|e| (e.ap_mac, e.channel)).collect()
    }

    /// Default overload threshold: twice the median known load. `None` for
    /// an empty table.
    pub fn default_load_threshold(&self) -> Option<u64> {
        let mut loads: Vec<u64> = self.entries.values().map(|e| e.load_us).collect();
        if loads.is_empty() {
            return None;
        }
        loads.sort_unstable();
        let n = loads.len();
        let twice_median = if n % 2 == 1 {
            2 * loads[n / 2]
        } else {
            loads[n / 2 - 1] + loads[n / 2]
        };
        Some(twice_median)
    }

    /// Entries as broadcast to neighbors, ascending by AP id.
    pub fn broadcast_payload(&self) -> Vec<AssocTableEntry> {
        self.entries.values().copied().collect()
    }
}

/// Answer to a cooperative probe request: every neighbor's table merged
/// newest-wins.
pub fn probe_request_response(neighbor_tables: &[&AssocTable]) -> Vec<AssocTableEntry> {
    let mut merged = AssocTable::new(NodeId(0));
    for t in neighbor_tables {
        merged.merge_received(&t.broadcast_payload());
    }
    merged.broadcast_payload()
}

pub fn encode_payload(entries: &[AssocTableEntry]) -> Vec<u8> {
    let mut sorted = entries.to_vec();
    sorted.sort_by_key(|e| e.ap_mac);
    let mut out = Vec::with_capacity(sorted.len() * RECORD_LEN);
    for e in sorted {
        out.extend_from_slice(&u64::from(e.ap_mac.0).to_le_bytes());
        out.push(e.channel.0);
        out.extend_from_slice(&e.load_us.to_le_bytes());
        out.extend_from_slice(&e.timestamp_us.to_le_bytes());
    }
    out
}

pub fn decode_payload(bytes: &[u8]) -> Result<Vec<AssocTableEntry>, CoopError> {
    if !bytes.len().is_multiple_of(RECORD_LEN) {
        return Err(CoopError::Truncated(bytes.len()));
    }
    let word = |b: &[u8]| u64::from_le_bytes(b.try_into().unwrap());
    let mut out: Vec<AssocTableEntry> = Vec::with_capacity(bytes.len() / RECORD_LEN);
    for (index, rec) in bytes.chunks_exact(RECORD_LEN).enumerate() {
        let mac = word(&rec[0..8]);
        let ap_mac = u32::try_from(mac)
            .map(NodeId)
            .map_err(|_| CoopError::InvalidMac { index, mac })?;
        let channel =
            Channel::new(rec[8]).ok_or(CoopError::InvalidChannel { index, channel: rec[8] })?;
        if out.last().is_some_and(|p| p.ap_mac >= ap_mac) {
            return Err(CoopError::Unordered(index));
        }
        out.push(AssocTableEntry {
            ap_mac,
            channel,
            load_us: word(&rec[9..17]),
            timestamp_us: word(&rec[17..25]),
        });
    }
    Ok(out)
}

/// Components of a handoff: scanning every channel, then authentication and
/// reassociation with the chosen AP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HandoffDelayModel {
    pub per_channel_dwell_us: u64,
    pub n_channels: u64,
    pub auth_delay_us: u64,
    pub reassoc_delay_us: u64,
}

impl Default for HandoffDelayModel {
    fn default() -> Self {
        HandoffDelayModel {
            per_channel_dwell_us: 50_000,
            n_channels: 12,
            auth_delay_us: 5_000,
            reassoc_delay_us: 5_000,
        }
    }
}

impl HandoffDelayModel {
    pub fn scan_delay_us(&self) -> u64 {
        self.n_channels * self.per_channel_dwell_us
    }

    /// A usable table removes the scan; authentication and reassociation
    /// are always paid.
    pub fn handoff_delay(&self, used_table: bool) -> u64 {
        let tail = self.auth_delay_us + self.reassoc_delay_us;
        if used_table {
            tail
        } else {
            self.scan_delay_us() + tail
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(mac: u32, ch: u8, load: u64, ts: u64) -> AssocTableEntry {
        AssocTableEntry { ap_mac: NodeId(mac), channel: Channel(ch), load_us: load, timestamp_us: ts }
    }

    /// The three-AP example table: channels 1/6/11, loads 13/45/33.
    fn example_table() -> AssocTable {
        let mut t = AssocTable::new(NodeId(100));
        t.merge_received(&[entry(3, 11, 33, 136), entry(1, 1, 13, 123), entry(2, 6, 45, 134)]);
        t
    }

    #[test]
    fn merge_into_empty() {
        assert_eq!(example_table().len(), 3);
    }

    #[test]
    fn older_record_ignored_newer_replaces() {
        let mut t = AssocTable::new(NodeId(9));
        t.merge_received(&[entry(1, 1, 10, 100)]);
        t.merge_received(&[entry(1, 1, 99, 90)]);
        assert_eq!(t.entries[&NodeId(1)].load_us, 10);
        t.merge_received(&[entry(1, 6, 20, 101)]);
        assert_eq!(t.entries[&NodeId(1)], entry(1, 6, 20, 101));
    }

    #[test]
    fn merge_idempotent() {
        let r = [entry(1, 1, 10, 100), entry(4, 2, 3, 7)];
        let mut once = example_table();
        once.merge_received(&r);
        let mut twice = once.clone();
        twice.merge_received(&r);
        assert_eq!(once, twice);
    }

    #[test]
    fn eligible_sorted_by_load_under_threshold() {
        let t = example_table();
        assert_eq!(t.eligible_aps(140, 1_000, 40), vec![(NodeId(1), Channel(1)), (NodeId(3), Channel(11))]);
    }

    #[test]
    fn stale_entries_excluded() {
        let t = example_table();
        // AP1 measured at 123 is 27 µs old at 150; the others are fresher.
        let e = t.eligible_aps(150, 20, 1_000);
        assert_eq!(e, vec![(NodeId(3), Channel(11)), (NodeId(2), Channel(6))]);
    }

    #[test]
    fn default_threshold_is_twice_median() {
        assert_eq!(example_table().default_load_threshold(), Some(66));
        assert_eq!(AssocTable::new(NodeId(1)).default_load_threshold(), None);
    }

    #[test]
    fn payload_in_mac_order() {
        let p = example_table().broadcast_payload();
        let macs: Vec<u32> = p.iter().map(|e| e.ap_mac.0).collect();
        assert_eq!(macs, vec![1, 2, 3]);
        assert!(AssocTable::new(NodeId(1)).broadcast_payload().is_empty());
    }

    #[test]
    fn wire_golden_bytes() {
        let bytes = encode_payload(&[entry(2, 6, 45, 134)]);
        let mut expect = vec![2, 0, 0, 0, 0, 0, 0, 0, 6, 45, 0, 0, 0, 0, 0, 0, 0];
        expect.extend_from_slice(&[134, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(bytes, expect);
        let p = example_table().broadcast_payload();
        assert_eq!(decode_payload(&encode_payload(&p)).unwrap(), p);
    }

    #[test]
    fn decode_rejects_malformed() {
        assert_eq!(decode_payload(&[0; 24]), Err(CoopError::Truncated(24)));
        let mut b = encode_payload(&[entry(1, 1, 0, 0)]);
        b[8] = 13;
        assert!(matches!(decode_payload(&b), Err(CoopError::InvalidChannel { .. })));
        let mut b = encode_payload(&[entry(1, 1, 0, 0)]);
        b.extend(encode_payload(&[entry(1, 1, 0, 0)]));
        assert_eq!(decode_payload(&b), Err(CoopError::Unordered(1)));
    }

    #[test]
    fn probe_response_unions_newest_wins() {
        let mut a = AssocTable::new(NodeId(50));
        a.merge_received(&[entry(1, 1, 13, 123), entry(3, 11, 30, 134)]);
        let mut b = AssocTable::new(NodeId(51));
        b.merge_received(&[entry(2, 6, 45, 134), entry(3, 11, 33, 136)]);
        let r = probe_request_response(&[&a, &b]);
        assert_eq!(r.len(), 3);
        assert_eq!(r[2], entry(3, 11, 33, 136));
        assert!(probe_request_response(&[]).is_empty());
    }

    #[test]
    fn handoff_delay_defaults() {
        let m = HandoffDelayModel::default();
        assert_eq!(m.handoff_delay(false), 610_000);
        assert_eq!(m.handoff_delay(true), 10_000);
        let z = HandoffDelayModel { n_channels: 0, ..m };
        assert_eq!(z.handoff_delay(false), z.handoff_delay(true));
    }
}
