//! Per-frame records and run-level metrics.

use crate::ids::NodeId;
use crate::scenario::Endpoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Fate {
    Delivered,
    /// Retry limit reached after a collision.
    DroppedRetry,
    /// Retry limit reached after a channel error.
    DroppedError,
    /// No association (or no serving AP) for a station endpoint.
    DroppedNoAssoc,
    /// Interface queue full.
    DroppedOverflow,
}

impl Fate {
    pub const ALL: [Fate; 5] = [
        Fate::Delivered,
        Fate::DroppedRetry,
        Fate::DroppedError,
        Fate::DroppedNoAssoc,
        Fate::DroppedOverflow,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    /// Index of the generating traffic source.
    pub flow: usize,
    pub size_bits: u64,
    pub created_us: u64,
    pub src: Endpoint,
    pub dst: Endpoint,
    /// Failed attempts summed over all hops.
    pub retries: u32,
    pub fate: Option<Fate>,
    /// Time the fate was assigned.
    pub fate_us: Option<u64>,
    /// Time the frame left the originating station.
    pub client_sent_us: Option<u64>,
    /// First AP that queued the frame, with arrival and departure times.
    pub ap: Option<NodeId>,
    pub ap_arrival_us: Option<u64>,
    pub ap_done_us: Option<u64>,
    pub backbone_hops: u32,
}

impl FrameRecord {
    pub fn delivered_us(&self) -> Option<u64> {
        match self.fate {
            Some(Fate::Delivered) => self.fate_us,
            _ => None,
        }
    }
}

/// Frame and bit accounting at one instant. `inflight_*` is counted from
/// the interface queues, independently of the other three.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConservationSample {
    pub time_us: u64,
    pub generated_bits: u64,
    pub delivered_bits: u64,
    pub dropped_bits: u64,
    pub inflight_bits: u64,
    pub generated_frames: u64,
    pub delivered_frames: u64,
    pub dropped_frames: u64,
    pub inflight_frames: u64,
}

impl ConservationSample {
    pub fn holds(&self) -> bool {
        self.generated_bits == self.delivered_bits + self.dropped_bits + self.inflight_bits
            && self.generated_frames
                == self.delivered_frames + self.dropped_frames + self.inflight_frames
    }
}

/// Station weights right after reacting to a beacon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSample {
    pub time_us: u64,
    pub station: NodeId,
    pub heard_b: f64,
    pub w1_before: f64,
    pub w1: f64,
    pub w2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadSample {
    pub time_us: u64,
    /// Cumulative cost of every AP that is on, µs.
    pub loads: Vec<(NodeId, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub duration_us: u64,
    /// Delivered throughput per sample interval, b/s, stamped at interval end.
    pub throughput_series: Vec<(u64, f64)>,
    /// Delivered bits over the whole run, b/s.
    pub throughput_bps: f64,
    /// Mean per-hop time from reaching the head of a queue to success.
    pub avg_tx_delay_us: f64,
    pub avg_client_access_delay_us: f64,
    pub avg_ap_access_delay_us: f64,
    pub avg_e2e_delay_us: f64,
    pub generated_bits: u64,
    pub delivered_bits: u64,
    pub dropped_bits: u64,
    pub inflight_bits: u64,
    /// Frames per fate, indexed by [`Fate::index`].
    pub frames_by_fate: [u64; 5],
    pub ap_load_series: Vec<LoadSample>,
    /// Mean balancing index over APs that are on, per advertisement round.
    pub balance_series: Vec<(u64, f64)>,
    pub mean_balance_index: f64,
    /// Moves from one AP to another (including forced moves after an AP
    /// disappears). First associations are counted in `joins`.
    pub handoffs: u64,
    pub joins: u64,
    pub handoff_delays_us: Vec<u64>,
    pub join_delays_us: Vec<u64>,
    pub weight_samples: Vec<WeightSample>,
    pub conservation: Vec<ConservationSample>,
    /// Successful transmissions that started before the previous one on
    /// the same medium ended. Always zero in a correct run.
    pub medium_overlaps: u64,
    pub events: u64,
    pub trace_hash: String,
    pub frames: Vec<FrameRecord>,
}

impl RunMetrics {
    pub fn handoff_delay_total_us(&self) -> u64 {
        self.handoff_delays_us.iter().sum()
    }

    pub fn delivery_ratio(&self) -> f64 {
        if self.generated_bits == 0 {
            return 1.0;
        }
        self.delivered_bits as f64 / self.generated_bits as f64
    }

    pub fn frames_with(&self, fate: Fate) -> u64 {
        self.frames_by_fate[fate.index()]
    }
}

/// Running mean.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Mean {
    sum: f64,
    n: u64,
}

impl Mean {
    pub fn add(&mut self, x: f64) {
        self.sum += x;
        self.n += 1;
    }

    pub fn value(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }
}
