//! Station association and load balancing for 802.11 mesh networks.
//!
//! The formula modules ([`airtime`], [`balancer`], [`association`]) are
//! generic over the scalar type; the simulator itself runs on `f64`.

// `!(x > 0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod airtime;
pub mod association;
pub mod balancer;
pub mod builtin;
pub mod channel;
pub mod coop;
pub mod ids;
pub mod num;
pub mod report;
pub mod routing;
pub mod scenario;
pub mod sim;

pub use ids::{Channel, NodeId, Position};
pub use builtin::{builtin_scenario, builtin_scenario_seeded, BUILTIN_NAMES};
pub use num::Scalar;

pub type AirtimeParamsF64 = airtime::AirtimeParams<f64>;
pub type AirtimeParamsF32 = airtime::AirtimeParams<f32>;
pub type ApLoadStateF64 = airtime::ApLoadState<f64>;
pub type BalancerStateF64 = balancer::BalancerState<f64>;
pub type BalancerStateF32 = balancer::BalancerState<f32>;
pub type BalancerConfigF64 = balancer::BalancerConfig<f64>;
pub type NeighborhoodCostsF64 = balancer::NeighborhoodCosts<f64>;
pub type CandidateApF64 = association::CandidateAp<f64>;
pub type CandidateApF32 = association::CandidateAp<f32>;
pub type AssocDecisionF64 = association::AssocDecision<f64>;
