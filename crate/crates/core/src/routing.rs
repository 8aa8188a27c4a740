//! Minimum-airtime routing over the mesh backbone.
//!
//! Routes are recomputed periodically from scratch rather than discovered
//! on demand; a table older than its refresh window answers `StaleRoute`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use thiserror::Error;

use crate::airtime::{station_airtime, AirtimeError, StationLinkSample};
use crate::channel::ChannelError;
use crate::ids::NodeId;
use crate::scenario::{NodeKind, Scenario};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoutingError {
    #[error("backbone graph is disconnected: {0} unreachable")]
    Disconnected(NodeId),
    #[error("unknown receiver {0}")]
    UnknownReceiver(NodeId),
    #[error("route table epoch {epoch_us} expired at {now_us}")]
    StaleRoute { epoch_us: u64, now_us: u64 },
    #[error("no route from {0} to {1}")]
    NoRoute(NodeId, NodeId),
    #[error("invalid edge {0}-{1}: {2}")]
    InvalidEdge(NodeId, NodeId, &'static str),
    #[error("backbone link {0}-{1}: {2}")]
    Link(NodeId, NodeId, ChannelError),
    #[error("backbone link {0}-{1}: {2}")]
    Airtime(NodeId, NodeId, AirtimeError),
}

/// Undirected backbone with airtime edge costs in µs.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneGraph {
    pub vertices: BTreeSet<NodeId>,
    adjacency: BTreeMap<NodeId, BTreeMap<NodeId, f64>>,
}

impl BackboneGraph {
    /// Builds and validates a graph. Every edge cost must be positive and
    /// finite, and all vertices must be mutually reachable.
    pub fn new(
        vertices: impl IntoIterator<Item = NodeId>,
        edges: &[(NodeId, NodeId, f64)],
    ) -> Result<Self, RoutingError> {
        let vertices: BTreeSet<NodeId> = vertices.into_iter().collect();
        let mut adjacency: BTreeMap<NodeId, BTreeMap<NodeId, f64>> =
            vertices.iter().map(|&v| (v, BTreeMap::new())).collect();
        for &(u, v, cost) in edges {
            if u == v {
                return Err(RoutingError::InvalidEdge(u, v, "self loop"));
            }
            if !(cost > 0.0 && cost.is_finite()) {
                return Err(RoutingError::InvalidEdge(u, v, "cost must be positive and finite"));
            }
            if !vertices.contains(&u) || !vertices.contains(&v) {
                return Err(RoutingError::InvalidEdge(u, v, "endpoint not a backbone vertex"));
            }
            adjacency.get_mut(&u).unwrap().insert(v, cost);
            adjacency.get_mut(&v).unwrap().insert(u, cost);
        }
        let graph = BackboneGraph { vertices, adjacency };
        if let Some(&start) = graph.vertices.iter().next() {
            let mut seen = BTreeSet::from([start]);
            let mut stack = vec![start];
            while let Some(u) = stack.pop() {
                for &v in graph.adjacency[&u].keys() {
                    if seen.insert(v) {
                        stack.push(v);
                    }
                }
            }
            if let Some(&missing) = graph.vertices.iter().find(|v| !seen.contains(v)) {
                return Err(RoutingError::Disconnected(missing));
            }
        }
        Ok(graph)
    }

    pub fn edge_cost(&self, u: NodeId, v: NodeId) -> Option<f64> {
        self.adjacency.get(&u).and_then(|m| m.get(&v)).copied()
    }

    pub fn neighbors(&self, u: NodeId) -> impl Iterator<Item = (NodeId, f64)> + '_ {
        self.adjacency.get(&u).into_iter().flat_map(|m| m.iter().map(|(&v, &c)| (v, c)))
    }

    /// Edges with `u < v`, in ascending order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId, f64)> {
        self.adjacency
            .iter()
            .flat_map(|(&u, m)| m.iter().filter(move |(&v, _)| u < v).map(move |(&v, &c)| (u, v, c)))
            .collect()
    }
}

/// Backbone graph of a scenario: routers and APs as vertices, one edge per
/// declared link, costed by the airtime of a test frame over that link.
pub fn build_graph(scenario: &Scenario) -> Result<BackboneGraph, RoutingError> {
    let vertices: Vec<NodeId> = scenario
        .nodes
        .iter()
        .filter(|n| n.kind != NodeKind::Station)
        .map(|n| n.id)
        .collect();
    let mut edges = Vec::with_capacity(scenario.backbone_links.len());
    for link in &scenario.backbone_links {
        let (pa, pb) = match (scenario.node(link.a), scenario.node(link.b)) {
            (Some(a), Some(b)) => (a.position, b.position),
            _ => return Err(RoutingError::InvalidEdge(link.a, link.b, "unknown endpoint")),
        };
        let q = scenario
            .channel
            .backbone_quality(pa, pb, link.rate_mbps)
            .map_err(|e| RoutingError::Link(link.a, link.b, e))?;
        let cost = station_airtime(
            &scenario.backbone_airtime,
            StationLinkSample::new(q.rate_mbps, q.error_prob),
        )
        .map_err(|e| RoutingError::Airtime(link.a, link.b, e))?;
        edges.push((link.a, link.b, cost));
    }
    BackboneGraph::new(vertices, &edges)
}

/// One route from a source toward a receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteEntry {
    pub next_hop: Option<NodeId>,
    /// Sum of edge costs along `path`, µs.
    pub cost_us: f64,
    /// Vertex sequence from source to receiver; empty when they coincide.
    pub path: Vec<NodeId>,
}

#[derive(PartialEq)]
struct HeapItem(f64, NodeId);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Minimum-cost routes from every vertex to `receiver`. Among equal-cost
/// paths the lexicographically smallest vertex sequence wins.
pub fn shortest_paths(
    graph: &BackboneGraph,
    receiver: NodeId,
) -> Result<BTreeMap<NodeId, RouteEntry>, RoutingError> {
    if !graph.vertices.contains(&receiver) {
        return Err(RoutingError::UnknownReceiver(receiver));
    }
    let mut dist: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut heap = BinaryHeap::from([HeapItem(0.0, receiver)]);
    dist.insert(receiver, 0.0);
    while let Some(HeapItem(d, u)) = heap.pop() {
        if d > dist[&u] {
            continue;
        }
        for (v, c) in graph.neighbors(u) {
            let nd = d + c;
            if dist.get(&v).is_none_or(|&old| nd < old) {
                dist.insert(v, nd);
                heap.push(HeapItem(nd, v));
            }
        }
    }

    // Smallest-id optimal successor at each vertex; following these
    // greedily yields the lexicographically smallest optimal path.
    let mut successor: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    for (&u, &du) in &dist {
        if u == receiver {
            continue;
        }
        let best = graph
            .neighbors(u)
            .filter(|(v, c)| dist.get(v).is_some_and(|&dv| dv < du && near(c + dv, du)))
            .map(|(v, _)| v)
            .min()
            .expect("reachable vertex has an optimal successor");
        successor.insert(u, best);
    }

    let mut out = BTreeMap::new();
    for &src in dist.keys() {
        if src == receiver {
            out.insert(src, RouteEntry { next_hop: None, cost_us: 0.0, path: Vec::new() });
            continue;
        }
        let mut path = vec![src];
        let mut cost = 0.0;
        let mut u = src;
        while u != receiver {
            let v = successor[&u];
            cost += graph.edge_cost(u, v).unwrap();
            path.push(v);
            u = v;
        }
        out.insert(src, RouteEntry { next_hop: Some(path[1]), cost_us: cost, path });
    }
    Ok(out)
}

/// All-pairs routes with the time they were computed.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteTable {
    /// Keyed by (source, receiver).
    pub entries: BTreeMap<(NodeId, NodeId), RouteEntry>,
    pub epoch_us: u64,
    pub refresh_window_us: u64,
}

impl RouteTable {
    pub fn compute(graph: &BackboneGraph, now_us: u64, refresh_window_us: u64) -> Self {
        let mut entries = BTreeMap::new();
        for &rcv in &graph.vertices {
            let routes = shortest_paths(graph, rcv).expect("receiver is a vertex");
            for (src, e) in routes {
                entries.insert((src, rcv), e);
            }
        }
        RouteTable { entries, epoch_us: now_us, refresh_window_us }
    }

    pub fn is_stale(&self, now_us: u64) -> bool {
        now_us.saturating_sub(self.epoch_us) > self.refresh_window_us
    }

    fn entry(&self, source: NodeId, receiver: NodeId, now_us: u64) -> Result<&RouteEntry, RoutingError> {
        if self.is_stale(now_us) {
            return Err(RoutingError::StaleRoute { epoch_us: self.epoch_us, now_us });
        }
        self.entries.get(&(source, receiver)).ok_or(RoutingError::NoRoute(source, receiver))
    }

    /// Routing airtime cost from `source_ap` to `receiver`, µs.
    pub fn route_cost(&self, source_ap: NodeId, receiver: NodeId, now_us: u64) -> Result<f64, RoutingError> {
        self.entry(source_ap, receiver, now_us).map(|e| e.cost_us)
    }

    pub fn next_hop(&self, source: NodeId, receiver: NodeId, now_us: u64) -> Result<Option<NodeId>, RoutingError> {
        self.entry(source, receiver, now_us).map(|e| e.next_hop)
    }
}
