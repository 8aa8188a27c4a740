//! Deterministic discrete-event simulation of a mesh network.

mod engine;
pub mod event;
pub mod metrics;
pub mod rng;
mod trace;

pub use engine::{run, run_traced, Fault, SimError, BACKOFF_SLOTS, FTP_WINDOW, MAX_RETRIES, VOIP_INTERVAL_US};
pub use metrics::{ConservationSample, Fate, FrameRecord, LoadSample, RunMetrics, WeightSample};
