//! Event queue ordered by (time, insertion sequence).

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::ids::NodeId;

/// Index of a shared medium (access contention domain or backbone link).
pub type MediumId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    /// Contention round on a medium.
    FrameTx(MediumId),
    /// End of the transmission started by the last contention round.
    FrameDone(MediumId),
    BeaconTx(NodeId),
    LabaTx,
    CoopBroadcast(NodeId),
    /// Wire-form table delivered to a station.
    CoopDeliver { to: NodeId, payload: Vec<u8> },
    /// Next frame of a traffic generator.
    TrafficArrival(usize),
    AssocEval(NodeId),
    HandoffDone(NodeId),
    ChurnOn(NodeId),
    ChurnOff(NodeId),
    RouteRefresh,
    MetricSample,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::FrameTx(_) => "FrameTx",
            EventKind::FrameDone(_) => "FrameDone",
            EventKind::BeaconTx(_) => "BeaconTx",
            EventKind::LabaTx => "LabaTx",
            EventKind::CoopBroadcast(_) => "CoopBroadcast",
            EventKind::CoopDeliver { .. } => "CoopDeliver",
            EventKind::TrafficArrival(_) => "TrafficArrival",
            EventKind::AssocEval(_) => "AssocEval",
            EventKind::HandoffDone(_) => "HandoffDone",
            EventKind::ChurnOn(_) => "ChurnOn",
            EventKind::ChurnOff(_) => "ChurnOff",
            EventKind::RouteRefresh => "RouteRefresh",
            EventKind::MetricSample => "MetricSample",
        }
    }

    /// Subject column of the trace.
    pub fn subject(&self) -> String {
        match self {
            EventKind::FrameTx(m) | EventKind::FrameDone(m) => format!("m{m}"),
            EventKind::TrafficArrival(g) => format!("g{g}"),
            EventKind::CoopDeliver { to, .. } => to.to_string(),
            EventKind::BeaconTx(n)
            | EventKind::CoopBroadcast(n)
            | EventKind::AssocEval(n)
            | EventKind::HandoffDone(n)
            | EventKind::ChurnOn(n)
            | EventKind::ChurnOff(n) => n.to_string(),
            EventKind::LabaTx | EventKind::RouteRefresh | EventKind::MetricSample => "-".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub time_us: u64,
    pub seq: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry(Reverse<(u64, u64)>, EventKind);

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.cmp(&other.0)
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Entry>,
    next_seq: u64,
    now_us: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> u64 {
        self.now_us
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Schedules `kind` at `time_us`. Times in the past are moved to now.
    pub fn schedule(&mut self, time_us: u64, kind: EventKind) {
        let t = time_us.max(self.now_us);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Entry(Reverse((t, seq)), kind));
    }

    pub fn pop(&mut self) -> Option<Event> {
        let Entry(Reverse((time_us, seq)), kind) = self.heap.pop()?;
        debug_assert!(time_us >= self.now_us);
        self.now_us = time_us;
        Some(Event { time_us, seq, kind })
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.heap.peek().map(|e| e.0 .0 .0)
    }
}
