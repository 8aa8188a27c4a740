//! Helpers shared by the integration tests: small scenario builders and
//! independent reference implementations used as oracles.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use meshbal::association::CandidateAp;
use meshbal::scenario::{Endpoint, NodeKind, NodeSpec, Scenario, TrafficSpec};
use meshbal::{Channel, NodeId, Position};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn node(id: u32, kind: NodeKind, x: f64, y: f64, channel: Option<u8>) -> NodeSpec {
    NodeSpec {
        id: NodeId(id),
        kind,
        position: Position::new(x, y),
        channel: channel.map(Channel),
        on_at: None,
        off_at: None,
    }
}

pub fn ap(id: u32, x: f64, y: f64, channel: u8) -> NodeSpec {
    node(id, NodeKind::MeshAp, x, y, Some(channel))
}

pub fn sta(id: u32, x: f64, y: f64) -> NodeSpec {
    node(id, NodeKind::Station, x, y, None)
}

/// Uplink CBR to the distribution system, starting after the initial scan.
pub fn cbr_up(id: u32, kbps: f64, start_us: u64) -> TrafficSpec {
    let mut t = TrafficSpec::cbr(Endpoint::Node(NodeId(id)), Endpoint::Sink, kbps);
    t.start_us = start_us;
    t
}

/// One AP on channel 1 and the given stations on the x axis, error-free.
pub fn one_cell(stations: &[f64]) -> Scenario {
    let mut sc = Scenario { duration_us: 2_000_000, ..Scenario::default() };
    sc.channel.base_error = 0.0;
    sc.nodes.push(ap(1, 0.0, 0.0, 1));
    for (i, &x) in stations.iter().enumerate() {
        sc.nodes.push(sta(10 + i as u32, x, 0.0));
    }
    sc
}

// ----- formula oracles, written out longhand -----------------------------

pub const O_CA: f64 = 335.0;
pub const O_P: f64 = 364.0;
pub const B_T: f64 = 8224.0;

pub fn oracle_station_airtime(o_ca: f64, o_p: f64, b_t: f64, r: f64, e: f64) -> f64 {
    let numerator = o_ca + o_p + b_t / r;
    numerator / (1.0 - e)
}

pub fn oracle_uplink(o_ca: f64, o_p: f64, b_t: f64, rates: &[f64], e: f64) -> f64 {
    if rates.is_empty() {
        return 0.0;
    }
    let mut inv = 0.0;
    for r in rates {
        inv += 1.0 / r;
    }
    let mean_rate = rates.len() as f64 / inv;
    rates.len() as f64 * oracle_station_airtime(o_ca, o_p, b_t, mean_rate, e)
}

pub fn oracle_downlink(o_ca: f64, o_p: f64, b_t: f64, links: &[(f64, f64)]) -> f64 {
    let mut total = 0.0;
    for &(r, e) in links {
        total += (o_ca + o_p) / (1.0 - e) + b_t / (r * (1.0 - e));
    }
    total
}

pub fn oracle_total_cost(up: f64, down: f64, rc: f64, w1: f64, w2: f64) -> f64 {
    w1 * (up + down) + w2 * rc
}

pub fn oracle_balance(ac: &[f64]) -> f64 {
    let s: f64 = ac.iter().sum();
    let s2: f64 = ac.iter().map(|x| x * x).sum();
    if s2 == 0.0 {
        1.0
    } else {
        s * s / (ac.len() as f64 * s2)
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

// ----- routing oracle ----------------------------------------------------

/// Random connected graph: a random spanning tree plus extra edges, with
/// small integer costs so that equal-cost paths are common.
pub fn random_graph(rng: &mut impl Rng, max_vertices: usize) -> (Vec<NodeId>, Vec<(NodeId, NodeId, f64)>) {
    let n = rng.gen_range(1..=max_vertices);
    let mut ids: Vec<u32> = (1..=40).collect();
    ids.shuffle(rng);
    let vs: Vec<NodeId> = ids[..n].iter().map(|&i| NodeId(i)).collect();
    let mut edges = BTreeMap::new();
    for i in 1..n {
        let j = rng.gen_range(0..i);
        let (a, b) = (vs[i].min(vs[j]), vs[i].max(vs[j]));
        edges.insert((a, b), rng.gen_range(1..=4) as f64);
    }
    let extra = rng.gen_range(0..=n * 2);
    for _ in 0..extra {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if i != j {
            let (a, b) = (vs[i].min(vs[j]), vs[i].max(vs[j]));
            edges.entry((a, b)).or_insert(rng.gen_range(1..=4) as f64);
        }
    }
    (vs, edges.into_iter().map(|((a, b), c)| (a, b, c)).collect())
}

/// Cheapest simple path from `src` to `dst` by exhaustive enumeration;
/// equal costs resolve to the lexicographically smallest vertex sequence.
pub fn brute_force_route(edges: &[(NodeId, NodeId, f64)], src: NodeId, dst: NodeId) -> Option<(f64, Vec<NodeId>)> {
    let mut adj: BTreeMap<NodeId, Vec<(NodeId, f64)>> = BTreeMap::new();
    for &(a, b, c) in edges {
        adj.entry(a).or_default().push((b, c));
        adj.entry(b).or_default().push((a, c));
    }
    let mut best: Option<(f64, Vec<NodeId>)> = None;
    let mut path = vec![src];
    let mut seen = BTreeSet::from([src]);
    fn dfs(
        adj: &BTreeMap<NodeId, Vec<(NodeId, f64)>>,
        dst: NodeId,
        cost: f64,
        path: &mut Vec<NodeId>,
        seen: &mut BTreeSet<NodeId>,
        best: &mut Option<(f64, Vec<NodeId>)>,
    ) {
        let u = *path.last().unwrap();
        if u == dst {
            let better = match best {
                None => true,
                Some((bc, bp)) => cost < *bc || (cost == *bc && path < bp),
            };
            if better {
                *best = Some((cost, path.clone()));
            }
            return;
        }
        for &(v, c) in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
            if seen.insert(v) {
                path.push(v);
                dfs(adj, dst, cost + c, path, seen, best);
                path.pop();
                seen.remove(&v);
            }
        }
    }
    dfs(&adj, dst, 0.0, &mut path, &mut seen, &mut best);
    best
}

// ----- decision oracles --------------------------------------------------

/// Candidates with small integer scores so ties are frequent.
pub fn random_candidates(rng: &mut impl Rng, max: usize) -> Vec<CandidateAp<f64>> {
    let n = rng.gen_range(1..=max);
    let mut ids: Vec<u32> = (1..=30).collect();
    ids.shuffle(rng);
    ids[..n]
        .iter()
        .map(|&id| CandidateAp {
            ap_id: NodeId(id),
            channel: Channel(rng.gen_range(1..=12)),
            rssi_dbm: -(rng.gen_range(40..=44) as f64),
            uplink_cost_us: Some(rng.gen_range(0..=4) as f64 * 100.0),
            downlink_cost_us: Some(rng.gen_range(0..=4) as f64 * 100.0),
            route_cost_us: Some(rng.gen_range(0..=4) as f64 * 250.0),
            beacon_age_us: 0,
        })
        .collect()
}

/// Index of the best candidate under `key`, lowest id among ties.
pub fn brute_force_best(cands: &[CandidateAp<f64>], key: impl Fn(&CandidateAp<f64>) -> f64, maximize: bool) -> NodeId {
    let scores: Vec<f64> = cands.iter().map(&key).collect();
    let target = if maximize {
        scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    } else {
        scores.iter().copied().fold(f64::INFINITY, f64::min)
    };
    cands
        .iter()
        .zip(&scores)
        .filter(|(_, &s)| s == target)
        .map(|(c, _)| c.ap_id)
        .min()
        .unwrap()
}
