//! Declarative experiment description and its text file format.
//!
//! A scenario file is UTF-8 text made of `[section]` headers followed by
//! `key = value` lines. `#` starts a comment. Sections `[general]`,
//! `[channel]` and `[policy]` appear at most once; `[node]`, `[link]` and
//! `[traffic]` repeat, one block per item. Keys absent from the file take
//! the defaults printed by [`defaults_template`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::airtime::{check_weights, AirtimeParams};
use crate::channel::{ChannelModel, BACKBONE_RATES_MBPS};
use crate::coop::HandoffDelayModel;
use crate::ids::{Channel, NodeId, Position};

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation { field: field.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    MeshRouter,
    MeshAp,
    Station,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::MeshRouter => "mesh_router",
            NodeKind::MeshAp => "mesh_ap",
            NodeKind::Station => "station",
        }
    }
}

impl FromStr for NodeKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mesh_router" => Ok(NodeKind::MeshRouter),
            "mesh_ap" => Ok(NodeKind::MeshAp),
            "station" => Ok(NodeKind::Station),
            _ => Err(format!("unknown node kind {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub kind: NodeKind,
    pub position: Position,
    /// Present exactly for APs.
    pub channel: Option<Channel>,
    pub on_at: Option<u64>,
    pub off_at: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TrafficKind {
    Cbr,
    FtpLike,
    VoipLike,
}

impl TrafficKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TrafficKind::Cbr => "cbr",
            TrafficKind::FtpLike => "ftp",
            TrafficKind::VoipLike => "voip",
        }
    }

    pub fn default_frame_bits(self) -> u64 {
        match self {
            TrafficKind::VoipLike => 1280,
            _ => 8192,
        }
    }
}

impl FromStr for TrafficKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cbr" => Ok(TrafficKind::Cbr),
            "ftp" => Ok(TrafficKind::FtpLike),
            "voip" => Ok(TrafficKind::VoipLike),
            _ => Err(format!("unknown traffic kind {s:?}")),
        }
    }
}

/// Flow endpoint: a node, or the traffic sink behind the backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Endpoint {
    Sink,
    Node(NodeId),
}

impl Endpoint {
    pub fn node(self) -> Option<NodeId> {
        match self {
            Endpoint::Node(n) => Some(n),
            Endpoint::Sink => None,
        }
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Sink => f.write_str("sink"),
            Endpoint::Node(n) => write!(f, "{n}"),
        }
    }
}

impl FromStr for Endpoint {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "sink" {
            return Ok(Endpoint::Sink);
        }
        s.parse::<u32>().map(|n| Endpoint::Node(NodeId(n))).map_err(|_| format!("bad endpoint {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSpec {
    pub kind: TrafficKind,
    pub source: Endpoint,
    pub destination: Endpoint,
    /// Offered rate for CBR flows, kb/s (1 kb = 1000 bits).
    pub rate_kbps: Option<f64>,
    /// Size of each FTP transfer, kilobytes (1 KB = 1024 bytes).
    pub file_size_kb: Option<f64>,
    pub start_us: u64,
    pub stop_us: Option<u64>,
    pub frame_payload_bits: u64,
}

impl TrafficSpec {
    pub fn cbr(source: Endpoint, destination: Endpoint, rate_kbps: f64) -> Self {
        TrafficSpec {
            kind: TrafficKind::Cbr,
            source,
            destination,
            rate_kbps: Some(rate_kbps),
            file_size_kb: None,
            start_us: 0,
            stop_us: None,
            frame_payload_bits: TrafficKind::Cbr.default_frame_bits(),
        }
    }

    pub fn ftp(source: Endpoint, destination: Endpoint, file_size_kb: f64) -> Self {
        TrafficSpec {
            kind: TrafficKind::FtpLike,
            rate_kbps: None,
            file_size_kb: Some(file_size_kb),
            ..Self::cbr(source, destination, 1.0)
        }
    }

    /// One bidirectional voice session between `source` and `destination`.
    pub fn voip(source: Endpoint, destination: Endpoint) -> Self {
        TrafficSpec {
            kind: TrafficKind::VoipLike,
            rate_kbps: None,
            frame_payload_bits: TrafficKind::VoipLike.default_frame_bits(),
            ..Self::cbr(source, destination, 1.0)
        }
    }

    /// Stations this flow touches.
    pub fn endpoints(&self) -> impl Iterator<Item = NodeId> {
        [self.source.node(), self.destination.node()].into_iter().flatten()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AssocPolicy {
    Rssi,
    Airtime,
    CrossLayer,
}

impl AssocPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            AssocPolicy::Rssi => "rssi",
            AssocPolicy::Airtime => "airtime",
            AssocPolicy::CrossLayer => "crosslayer",
        }
    }
}

impl FromStr for AssocPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rssi" => Ok(AssocPolicy::Rssi),
            "airtime" => Ok(AssocPolicy::Airtime),
            "crosslayer" => Ok(AssocPolicy::CrossLayer),
            _ => Err(format!("unknown association policy {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pub association: AssocPolicy,
    pub cooperative: bool,
    pub load_balancing: bool,
    pub w1_init: f64,
    pub w2_init: f64,
    pub balance_threshold_t: f64,
    pub coop_staleness_us: u64,
    /// `None` selects twice the median known load at decision time.
    pub coop_load_threshold_us: Option<u64>,
    pub hysteresis: f64,
    pub step_delta: f64,
    pub w1_max: f64,
    pub relax_patience: u32,
    /// `None` selects ten beacon intervals.
    pub reassoc_period_us: Option<u64>,
    /// `None` selects five beacon intervals.
    pub coop_broadcast_interval_us: Option<u64>,
    /// `None` selects the carrier-sense range.
    pub coop_range_m: Option<f64>,
    pub coop_latency_us: u64,
    pub neighbor_range_m: f64,
    pub handoff: HandoffDelayModel,
}

impl Default for PolicySpec {
    fn default() -> Self {
        PolicySpec {
            association: AssocPolicy::Airtime,
            cooperative: true,
            load_balancing: false,
            w1_init: 0.5,
            w2_init: 0.5,
            balance_threshold_t: 0.8,
            coop_staleness_us: 3_000_000,
            coop_load_threshold_us: None,
            hysteresis: 0.1,
            step_delta: 0.05,
            w1_max: 0.9,
            relax_patience: 5,
            reassoc_period_us: None,
            coop_broadcast_interval_us: None,
            coop_range_m: None,
            coop_latency_us: 2_000,
            neighbor_range_m: 300.0,
            handoff: HandoffDelayModel::default(),
        }
    }
}

/// Policy combinations accepted on the command line.
pub const POLICY_LABELS: [&str; 8] = [
    "rssi",
    "rssi+coop",
    "airtime",
    "airtime+coop",
    "crosslayer",
    "crosslayer+coop",
    "lb",
    "lb+coop",
];

impl PolicySpec {
    /// Short label such as `airtime+coop`; load balancing implies the
    /// cross-layer decider and is labelled `lb`.
    pub fn label(&self) -> String {
        let base = if self.load_balancing { "lb" } else { self.association.as_str() };
        if self.cooperative {
            format!("{base}+coop")
        } else {
            base.to_string()
        }
    }

    pub fn apply_label(&mut self, label: &str) -> Result<(), ScenarioError> {
        let (base, coop) = match label.strip_suffix("+coop") {
            Some(b) => (b, true),
            None => (label, false),
        };
        let (association, lb) = match base {
            "lb" => (AssocPolicy::CrossLayer, true),
            other => (other.parse::<AssocPolicy>().map_err(|m| invalid("policy", m))?, false),
        };
        self.association = association;
        self.load_balancing = lb;
        self.cooperative = coop;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackboneLink {
    pub a: NodeId,
    pub b: NodeId,
    pub rate_mbps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub nodes: Vec<NodeSpec>,
    pub backbone_links: Vec<BackboneLink>,
    pub traffic: Vec<TrafficSpec>,
    pub policy: PolicySpec,
    pub channel: ChannelModel,
    pub access_airtime: AirtimeParams<f64>,
    pub backbone_airtime: AirtimeParams<f64>,
    pub duration_us: u64,
    pub seed: u64,
    pub beacon_interval_us: u64,
    pub laba_interval_us: u64,
    /// Backbone node hosting the sink. `None` means every AP delivers
    /// sink-bound traffic straight to a wired distribution system.
    pub sink_node: Option<NodeId>,
    pub sample_interval_us: u64,
    /// Per-interface transmit queue capacity, frames.
    pub queue_limit: usize,
    /// Window over which APs estimate uplink error rates.
    pub error_window_us: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            nodes: Vec::new(),
            backbone_links: Vec::new(),
            traffic: Vec::new(),
            policy: PolicySpec::default(),
            channel: ChannelModel::default(),
            access_airtime: AirtimeParams::dot11b(),
            backbone_airtime: AirtimeParams::dot11b(),
            duration_us: 10_000_000,
            seed: DEFAULT_SEED,
            beacon_interval_us: 100_000,
            laba_interval_us: 1_000_000,
            sink_node: None,
            sample_interval_us: 100_000,
            queue_limit: 64,
            error_window_us: 1_000_000,
        }
    }
}

impl Scenario {
    pub fn node(&self, id: NodeId) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn aps(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::MeshAp)
    }

    pub fn stations(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::Station)
    }

    pub fn reassoc_period_us(&self) -> u64 {
        self.policy.reassoc_period_us.unwrap_or(10 * self.beacon_interval_us)
    }

    pub fn coop_broadcast_interval_us(&self) -> u64 {
        self.policy.coop_broadcast_interval_us.unwrap_or(5 * self.beacon_interval_us)
    }

    pub fn coop_range_m(&self) -> f64 {
        self.policy.coop_range_m.unwrap_or(self.channel.cs_range_m)
    }

    /// AP neighbor sets: APs within `neighbor_range_m` of each other.
    pub fn ap_neighbors(&self) -> BTreeMap<NodeId, BTreeSet<NodeId>> {
        let aps: Vec<&NodeSpec> = self.aps().collect();
        aps.iter()
            .map(|a| {
                let set = aps
                    .iter()
                    .filter(|b| b.id != a.id)
                    .filter(|b| a.position.distance(&b.position) <= self.policy.neighbor_range_m)
                    .map(|b| b.id)
                    .collect();
                (a.id, set)
            })
            .collect()
    }

    /// Size (including the AP itself) of the largest AP neighborhood.
    pub fn largest_neighborhood(&self) -> usize {
        self.ap_neighbors().values().map(|s| s.len() + 1).max().unwrap_or(0)
    }

    /// Checks every invariant of the data model.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.duration_us == 0 {
            return Err(invalid("duration_us", "must be positive"));
        }
        for (name, v) in [
            ("beacon_interval_us", self.beacon_interval_us),
            ("laba_interval_us", self.laba_interval_us),
            ("sample_interval_us", self.sample_interval_us),
            ("error_window_us", self.error_window_us),
        ] {
            if v == 0 {
                return Err(invalid(name, "must be positive"));
            }
        }
        if self.queue_limit == 0 {
            return Err(invalid("queue_limit", "must be positive"));
        }
        self.channel.validate().map_err(|m| invalid("channel", m))?;
        for (name, p) in [("access_airtime", &self.access_airtime), ("backbone_airtime", &self.backbone_airtime)] {
            AirtimeParams::new(p.o_ca_us, p.o_p_us, p.b_t_bits).map_err(|e| invalid(name, e.to_string()))?;
        }

        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id) {
                return Err(invalid("node.id", format!("duplicate id {}", n.id)));
            }
            if !n.position.is_finite() {
                return Err(invalid("node.position", format!("node {} position not finite", n.id)));
            }
            match (n.kind, n.channel) {
                (NodeKind::MeshAp, Some(c)) if c.is_valid() => {}
                (NodeKind::MeshAp, Some(c)) => {
                    return Err(invalid("node.channel", format!("node {}: channel {c} outside 1..=12", n.id)))
                }
                (NodeKind::MeshAp, None) => {
                    return Err(invalid("node.channel", format!("AP {} needs a channel", n.id)))
                }
                (_, Some(_)) => {
                    return Err(invalid("node.channel", format!("node {} is not an AP", n.id)))
                }
                (_, None) => {}
            }
            if let (Some(on), Some(off)) = (n.on_at, n.off_at) {
                if on >= off {
                    return Err(invalid("node.on_at", format!("node {}: on_at must precede off_at", n.id)));
                }
            }
        }

        let kind_of = |id: NodeId| self.node(id).map(|n| n.kind);
        let mut seen_links = BTreeSet::new();
        for l in &self.backbone_links {
            for end in [l.a, l.b] {
                match kind_of(end) {
                    Some(NodeKind::MeshRouter | NodeKind::MeshAp) => {}
                    Some(NodeKind::Station) => {
                        return Err(invalid("link", format!("{} is a station", end)))
                    }
                    None => return Err(invalid("link", format!("unknown node {end}"))),
                }
            }
            if l.a == l.b {
                return Err(invalid("link", format!("self loop at {}", l.a)));
            }
            if !seen_links.insert((l.a.min(l.b), l.a.max(l.b))) {
                return Err(invalid("link", format!("duplicate link {}-{}", l.a, l.b)));
            }
            if !BACKBONE_RATES_MBPS.contains(&l.rate_mbps) {
                return Err(invalid("link.rate_mbps", format!("{} not in {{6, 12}}", l.rate_mbps)));
            }
        }
        self.check_backbone_connected()?;

        if let Some(s) = self.sink_node {
            match kind_of(s) {
                Some(NodeKind::MeshRouter | NodeKind::MeshAp) => {}
                _ => return Err(invalid("sink_node", format!("{s} is not a backbone node"))),
            }
        }

        for t in &self.traffic {
            self.validate_traffic(t)?;
        }
        self.validate_policy()
    }

    fn check_backbone_connected(&self) -> Result<(), ScenarioError> {
        let backbone: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|n| n.kind != NodeKind::Station)
            .map(|n| n.id)
            .collect();
        let Some(&start) = backbone.first() else { return Ok(()) };
        let mut adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
        for l in &self.backbone_links {
            adj.entry(l.a).or_default().push(l.b);
            adj.entry(l.b).or_default().push(l.a);
        }
        let mut seen = BTreeSet::from([start]);
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &v in adj.get(&u).into_iter().flatten() {
                if seen.insert(v) {
                    stack.push(v);
                }
            }
        }
        match backbone.iter().find(|v| !seen.contains(v)) {
            Some(v) => Err(invalid("link", format!("backbone disconnected: {v} unreachable"))),
            None => Ok(()),
        }
    }

    fn validate_traffic(&self, t: &TrafficSpec) -> Result<(), ScenarioError> {
        for e in [t.source, t.destination] {
            if let Endpoint::Node(n) = e {
                if self.node(n).is_none() {
                    return Err(invalid("traffic", format!("unknown endpoint {n}")));
                }
            }
        }
        if t.source == t.destination {
            return Err(invalid("traffic", "source equals destination"));
        }
        let is_station = |e: Endpoint| {
            e.node().and_then(|n| self.node(n)).is_some_and(|n| n.kind == NodeKind::Station)
        };
        if !is_station(t.source) && !is_station(t.destination) {
            return Err(invalid("traffic", "at least one endpoint must be a station"));
        }
        if t.frame_payload_bits == 0 {
            return Err(invalid("traffic.frame_payload_bits", "must be positive"));
        }
        if let Some(stop) = t.stop_us {
            if stop <= t.start_us {
                return Err(invalid("traffic.stop_us", "must follow start_us"));
            }
        }
        match t.kind {
            TrafficKind::Cbr => match t.rate_kbps {
                Some(r) if r > 0.0 && r.is_finite() => Ok(()),
                _ => Err(invalid("traffic.rate_kbps", "must be positive for cbr")),
            },
            TrafficKind::FtpLike => match t.file_size_kb {
                Some(s) if s > 0.0 && s.is_finite() => Ok(()),
                _ => Err(invalid("traffic.file_size_kb", "must be positive for ftp")),
            },
            TrafficKind::VoipLike => Ok(()),
        }
    }

    fn validate_policy(&self) -> Result<(), ScenarioError> {
        let p = &self.policy;
        check_weights(p.w1_init, p.w2_init).map_err(|_| invalid("w1_init", "weights must sum to 1"))?;
        let n = self.largest_neighborhood();
        let lower = if n >= 2 { 1.0 / n as f64 } else { 0.0 };
        if !(p.balance_threshold_t > lower && p.balance_threshold_t < 1.0) {
            return Err(invalid(
                "balance_threshold_T",
                format!("must lie in ({lower}, 1) for a largest neighborhood of {n} APs"),
            ));
        }
        if !(0.0..1.0).contains(&p.hysteresis) {
            return Err(invalid("hysteresis", "must lie in [0, 1)"));
        }
        if !(p.step_delta > 0.0 && p.step_delta.is_finite()) {
            return Err(invalid("step_delta", "must be positive"));
        }
        if !(p.w1_max >= p.w1_init && p.w1_max <= 1.0) {
            return Err(invalid("w1_max", "must lie in [w1_init, 1]"));
        }
        if p.relax_patience == 0 {
            return Err(invalid("relax_patience", "must be at least 1"));
        }
        if p.coop_staleness_us == 0 {
            return Err(invalid("coop_staleness_us", "must be positive"));
        }
        if p.coop_load_threshold_us == Some(0) {
            return Err(invalid("coop_load_threshold_us", "must be positive"));
        }
        if p.reassoc_period_us == Some(0) || p.coop_broadcast_interval_us == Some(0) {
            return Err(invalid("policy", "periods must be positive"));
        }
        if p.coop_range_m.is_some_and(|r| !(r > 0.0 && r.is_finite())) {
            return Err(invalid("coop_range_m", "must be positive"));
        }
        if !(p.neighbor_range_m >= 0.0 && p.neighbor_range_m.is_finite()) {
            return Err(invalid("neighbor_range_m", "must be non-negative"));
        }
        Ok(())
    }

    /// Keeps the first `n` stations (in declaration order) and the flows
    /// that only involve kept stations.
    pub fn with_num_stations(&self, n: usize) -> Scenario {
        let keep: BTreeSet<NodeId> = self.stations().take(n).map(|s| s.id).collect();
        self.retain_stations(&keep)
    }

    /// Keeps the first `n` voice sessions and only the stations they use;
    /// other flows are kept when their stations survive.
    pub fn with_voip_sessions(&self, n: usize) -> Scenario {
        let keep: BTreeSet<NodeId> = self
            .traffic
            .iter()
            .filter(|t| t.kind == TrafficKind::VoipLike)
            .take(n)
            .flat_map(|t| t.endpoints())
            .collect();
        let mut out = self.retain_stations(&keep);
        let mut seen = 0;
        out.traffic.retain(|t| {
            if t.kind != TrafficKind::VoipLike {
                return true;
            }
            seen += 1;
            seen <= n
        });
        out
    }

    fn retain_stations(&self, keep: &BTreeSet<NodeId>) -> Scenario {
        let mut out = self.clone();
        out.nodes.retain(|n| n.kind != NodeKind::Station || keep.contains(&n.id));
        let present: BTreeSet<NodeId> = out.nodes.iter().map(|n| n.id).collect();
        out.traffic.retain(|t| t.endpoints().all(|e| present.contains(&e)));
        out
    }

    pub fn with_file_size_kb(&self, kb: f64) -> Scenario {
        let mut out = self.clone();
        for t in out.traffic.iter_mut().filter(|t| t.kind == TrafficKind::FtpLike) {
            t.file_size_kb = Some(kb);
        }
        out
    }

    /// Keeps the first `n` APs; links touching removed APs disappear.
    pub fn with_num_aps(&self, n: usize) -> Scenario {
        let drop: BTreeSet<NodeId> = self.aps().skip(n).map(|a| a.id).collect();
        let mut out = self.clone();
        out.nodes.retain(|x| !drop.contains(&x.id));
        out.backbone_links.retain(|l| !drop.contains(&l.a) && !drop.contains(&l.b));
        out.traffic.retain(|t| t.endpoints().all(|e| !drop.contains(&e)));
        out
    }
}

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    General,
    Channel,
    Node,
    Link,
    Traffic,
    Policy,
}

struct Block {
    section: Section,
    header_line: usize,
    entries: BTreeMap<String, (usize, String)>,
}

impl Block {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn get<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, ScenarioError>
    where
        T::Err: std::fmt::Display,
    {
        match self.take(key) {
            None => Ok(None),
            Some((line, raw)) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| ScenarioError::Syntax { line, message: format!("{key}: {e}") }),
        }
    }

    fn require<T: FromStr>(&mut self, key: &str, what: &str) -> Result<T, ScenarioError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?.ok_or_else(|| invalid(format!("{what}.{key}"), "missing"))
    }

    fn get_with<T>(
        &mut self,
        key: &str,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<Option<T>, ScenarioError> {
        match self.take(key) {
            None => Ok(None),
            Some((line, raw)) => parse(&raw)
                .map(Some)
                .map_err(|m| ScenarioError::Syntax { line, message: format!("{key}: {m}") }),
        }
    }

    fn finish(self) -> Result<(), ScenarioError> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (line, _))) => {
                Err(ScenarioError::Syntax { line, message: format!("unknown key {key:?}") })
            }
        }
    }
}

fn parse_floats<const N: usize>(raw: &str) -> Result<[f64; N], String> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != N {
        return Err(format!("expected {N} comma-separated numbers"));
    }
    let mut out = [0.0; N];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p.parse::<f64>().map_err(|e| format!("{p:?}: {e}"))?;
    }
    Ok(out)
}

fn parse_bool(raw: &str) -> Result<bool, String> {
    match raw {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got {raw:?}")),
    }
}

fn split_blocks(text: &str) -> Result<Vec<Block>, ScenarioError> {
    let mut blocks: Vec<Block> = Vec::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ScenarioError::Syntax { line, message: "unterminated section header".into() })?
                .trim();
            let section = match name {
                "general" => Section::General,
                "channel" => Section::Channel,
                "node" => Section::Node,
                "link" => Section::Link,
                "traffic" => Section::Traffic,
                "policy" => Section::Policy,
                _ => {
                    return Err(ScenarioError::Syntax { line, message: format!("unknown section [{name}]") })
                }
            };
            let singleton = matches!(section, Section::General | Section::Channel | Section::Policy);
            if singleton && blocks.iter().any(|b| b.section == section) {
                return Err(ScenarioError::Syntax { line, message: format!("section [{name}] repeated") });
            }
            blocks.push(Block { section, header_line: line, entries: BTreeMap::new() });
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ScenarioError::Syntax { line, message: "expected `key = value`".into() })?;
        let key = key.trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(ScenarioError::Syntax { line, message: format!("bad key {key:?}") });
        }
        let block = blocks
            .last_mut()
            .ok_or_else(|| ScenarioError::Syntax { line, message: "key outside any section".into() })?;
        if block.entries.insert(key.to_string(), (line, value.trim().to_string())).is_some() {
            return Err(ScenarioError::Syntax { line, message: format!("duplicate key {key:?}") });
        }
    }
    Ok(blocks)
}

/// Parses and validates a scenario file.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut sc = Scenario::default();
    for mut b in split_blocks(text)? {
        match b.section {
            Section::General => {
                if let Some(v) = b.get("duration_us")? {
                    sc.duration_us = v;
                }
                if let Some(v) = b.get("seed")? {
                    sc.seed = v;
                }
                if let Some(v) = b.get("beacon_interval_us")? {
                    sc.beacon_interval_us = v;
                }
                if let Some(v) = b.get("laba_interval_us")? {
                    sc.laba_interval_us = v;
                }
                if let Some(v) = b.get::<u32>("sink_node")? {
                    sc.sink_node = Some(NodeId(v));
                }
                if let Some(v) = b.get("sample_interval_us")? {
                    sc.sample_interval_us = v;
                }
                if let Some(v) = b.get("queue_limit")? {
                    sc.queue_limit = v;
                }
                if let Some(v) = b.get("error_window_us")? {
                    sc.error_window_us = v;
                }
            }
            Section::Channel => {
                let c = &mut sc.channel;
                if let Some(v) = b.get_with("rate_thresholds_m", parse_floats::<4>)? {
                    c.rate_thresholds_m = v;
                }
                if let Some(v) = b.get("base_error")? {
                    c.base_error = v;
                }
                if let Some(v) = b.get("cs_range_m")? {
                    c.cs_range_m = v;
                }
                if let Some(v) = b.get("backbone_base_error")? {
                    c.backbone_base_error = v;
                }
                if let Some(v) = b.get("backbone_range_m")? {
                    c.backbone_range_m = v;
                }
                for (prefix, p) in [("", &mut sc.access_airtime), ("backbone_", &mut sc.backbone_airtime)] {
                    if let Some(v) = b.get(&format!("{prefix}o_ca_us"))? {
                        p.o_ca_us = v;
                    }
                    if let Some(v) = b.get(&format!("{prefix}o_p_us"))? {
                        p.o_p_us = v;
                    }
                    if let Some(v) = b.get(&format!("{prefix}b_t_bits"))? {
                        p.b_t_bits = v;
                    }
                }
            }
            Section::Node => {
                let id = NodeId(b.require::<u32>("id", "node")?);
                let kind = b.require::<NodeKind>("kind", "node")?;
                let [x, y] = b
                    .get_with("position", parse_floats::<2>)?
                    .ok_or_else(|| invalid("node.position", "missing"))?;
                let channel = b.get::<u8>("channel")?.map(Channel);
                let on_at = b.get("on_at")?;
                let off_at = b.get("off_at")?;
                sc.nodes.push(NodeSpec { id, kind, position: Position::new(x, y), channel, on_at, off_at });
            }
            Section::Link => {
                let a = NodeId(b.require::<u32>("a", "link")?);
                let bb = NodeId(b.require::<u32>("b", "link")?);
                let rate_mbps = b.get("rate_mbps")?.unwrap_or(12.0);
                sc.backbone_links.push(BackboneLink { a, b: bb, rate_mbps });
            }
            Section::Traffic => {
                let kind = b.require::<TrafficKind>("kind", "traffic")?;
                let source = b.require::<Endpoint>("source", "traffic")?;
                let destination = b.get::<Endpoint>("destination")?.unwrap_or(Endpoint::Sink);
                sc.traffic.push(TrafficSpec {
                    kind,
                    source,
                    destination,
                    rate_kbps: b.get("rate_kbps")?,
                    file_size_kb: b.get("file_size_kb")?,
                    start_us: b.get("start_us")?.unwrap_or(0),
                    stop_us: b.get("stop_us")?,
                    frame_payload_bits: b.get("frame_payload_bits")?.unwrap_or(kind.default_frame_bits()),
                });
            }
            Section::Policy => {
                let p = &mut sc.policy;
                if let Some(v) = b.get("association")? {
                    p.association = v;
                }
                if let Some(v) = b.get_with("cooperative", parse_bool)? {
                    p.cooperative = v;
                }
                if let Some(v) = b.get_with("load_balancing", parse_bool)? {
                    p.load_balancing = v;
                }
                if let Some(v) = b.get("w1_init")? {
                    p.w1_init = v;
                }
                if let Some(v) = b.get("w2_init")? {
                    p.w2_init = v;
                }
                if let Some(v) = b.get("balance_threshold_T")? {
                    p.balance_threshold_t = v;
                }
                if let Some(v) = b.get("coop_staleness_us")? {
                    p.coop_staleness_us = v;
                }
                if let Some(v) = b.get("coop_load_threshold_us")? {
                    p.coop_load_threshold_us = Some(v);
                }
                if let Some(v) = b.get("hysteresis")? {
                    p.hysteresis = v;
                }
                if let Some(v) = b.get("step_delta")? {
                    p.step_delta = v;
                }
                if let Some(v) = b.get("w1_max")? {
                    p.w1_max = v;
                }
                if let Some(v) = b.get("relax_patience")? {
                    p.relax_patience = v;
                }
                if let Some(v) = b.get("reassoc_period_us")? {
                    p.reassoc_period_us = Some(v);
                }
                if let Some(v) = b.get("coop_broadcast_interval_us")? {
                    p.coop_broadcast_interval_us = Some(v);
                }
                if let Some(v) = b.get("coop_range_m")? {
                    p.coop_range_m = Some(v);
                }
                if let Some(v) = b.get("coop_latency_us")? {
                    p.coop_latency_us = v;
                }
                if let Some(v) = b.get("neighbor_range_m")? {
                    p.neighbor_range_m = v;
                }
                let h = &mut p.handoff;
                if let Some(v) = b.get("per_channel_dwell_us")? {
                    h.per_channel_dwell_us = v;
                }
                if let Some(v) = b.get("n_channels")? {
                    h.n_channels = v;
                }
                if let Some(v) = b.get("auth_delay_us")? {
                    h.auth_delay_us = v;
                }
                if let Some(v) = b.get("reassoc_delay_us")? {
                    h.reassoc_delay_us = v;
                }
            }
        }
        let _ = b.header_line;
        b.finish()?;
    }
    sc.validate()?;
    Ok(sc)
}

fn write_common(out: &mut String, sc: &Scenario) {
    let _ = writeln!(out, "[general]");
    let _ = writeln!(out, "duration_us = {}", sc.duration_us);
    let _ = writeln!(out, "seed = {}", sc.seed);
    let _ = writeln!(out, "beacon_interval_us = {}", sc.beacon_interval_us);
    let _ = writeln!(out, "laba_interval_us = {}", sc.laba_interval_us);
    if let Some(s) = sc.sink_node {
        let _ = writeln!(out, "sink_node = {s}");
    }
    let _ = writeln!(out, "sample_interval_us = {}", sc.sample_interval_us);
    let _ = writeln!(out, "queue_limit = {}", sc.queue_limit);
    let _ = writeln!(out, "error_window_us = {}", sc.error_window_us);

    let c = &sc.channel;
    let t = c.rate_thresholds_m;
    let _ = writeln!(out, "\n[channel]");
    let _ = writeln!(out, "rate_thresholds_m = {}, {}, {}, {}", t[0], t[1], t[2], t[3]);
    let _ = writeln!(out, "base_error = {}", c.base_error);
    let _ = writeln!(out, "cs_range_m = {}", c.cs_range_m);
    let _ = writeln!(out, "backbone_base_error = {}", c.backbone_base_error);
    let _ = writeln!(out, "backbone_range_m = {}", c.backbone_range_m);
    for (prefix, p) in [("", &sc.access_airtime), ("backbone_", &sc.backbone_airtime)] {
        let _ = writeln!(out, "{prefix}o_ca_us = {}", p.o_ca_us);
        let _ = writeln!(out, "{prefix}o_p_us = {}", p.o_p_us);
        let _ = writeln!(out, "{prefix}b_t_bits = {}", p.b_t_bits);
    }

    let p = &sc.policy;
    let _ = writeln!(out, "\n[policy]");
    let _ = writeln!(out, "association = {}", p.association.as_str());
    let _ = writeln!(out, "cooperative = {}", p.cooperative);
    let _ = writeln!(out, "load_balancing = {}", p.load_balancing);
    let _ = writeln!(out, "w1_init = {}", p.w1_init);
    let _ = writeln!(out, "w2_init = {}", p.w2_init);
    let _ = writeln!(out, "balance_threshold_T = {}", p.balance_threshold_t);
    let _ = writeln!(out, "coop_staleness_us = {}", p.coop_staleness_us);
    if let Some(v) = p.coop_load_threshold_us {
        let _ = writeln!(out, "coop_load_threshold_us = {v}");
    }
    let _ = writeln!(out, "hysteresis = {}", p.hysteresis);
    let _ = writeln!(out, "step_delta = {}", p.step_delta);
    let _ = writeln!(out, "w1_max = {}", p.w1_max);
    let _ = writeln!(out, "relax_patience = {}", p.relax_patience);
    if let Some(v) = p.reassoc_period_us {
        let _ = writeln!(out, "reassoc_period_us = {v}");
    }
    if let Some(v) = p.coop_broadcast_interval_us {
        let _ = writeln!(out, "coop_broadcast_interval_us = {v}");
    }
    if let Some(v) = p.coop_range_m {
        let _ = writeln!(out, "coop_range_m = {v}");
    }
    let _ = writeln!(out, "coop_latency_us = {}", p.coop_latency_us);
    let _ = writeln!(out, "neighbor_range_m = {}", p.neighbor_range_m);
    let h = &p.handoff;
    let _ = writeln!(out, "per_channel_dwell_us = {}", h.per_channel_dwell_us);
    let _ = writeln!(out, "n_channels = {}", h.n_channels);
    let _ = writeln!(out, "auth_delay_us = {}", h.auth_delay_us);
    let _ = writeln!(out, "reassoc_delay_us = {}", h.reassoc_delay_us);
}

/// Renders a scenario in the file format; `parse_scenario` inverts it.
pub fn serialize_scenario(sc: &Scenario) -> String {
    let mut out = String::new();
    write_common(&mut out, sc);
    for n in &sc.nodes {
        let _ = writeln!(out, "\n[node]");
        let _ = writeln!(out, "id = {}", n.id);
        let _ = writeln!(out, "kind = {}", n.kind.as_str());
        let _ = writeln!(out, "position = {}, {}", n.position.x, n.position.y);
        if let Some(c) = n.channel {
            let _ = writeln!(out, "channel = {c}");
        }
        if let Some(v) = n.on_at {
            let _ = writeln!(out, "on_at = {v}");
        }
        if let Some(v) = n.off_at {
            let _ = writeln!(out, "off_at = {v}");
        }
    }
    for l in &sc.backbone_links {
        let _ = writeln!(out, "\n[link]\na = {}\nb = {}\nrate_mbps = {}", l.a, l.b, l.rate_mbps);
    }
    for t in &sc.traffic {
        let _ = writeln!(out, "\n[traffic]");
        let _ = writeln!(out, "kind = {}", t.kind.as_str());
        let _ = writeln!(out, "source = {}", t.source);
        let _ = writeln!(out, "destination = {}", t.destination);
        if let Some(v) = t.rate_kbps {
            let _ = writeln!(out, "rate_kbps = {v}");
        }
        if let Some(v) = t.file_size_kb {
            let _ = writeln!(out, "file_size_kb = {v}");
        }
        let _ = writeln!(out, "start_us = {}", t.start_us);
        if let Some(v) = t.stop_us {
            let _ = writeln!(out, "stop_us = {v}");
        }
        let _ = writeln!(out, "frame_payload_bits = {}", t.frame_payload_bits);
    }
    out
}

/// Annotated template listing every key with its default value.
pub fn defaults_template() -> String {
    let sc = Scenario::default();
    let mut out = String::from(
        "# Scenario file defaults. Sections [node], [link] and [traffic] repeat.\n\
         # Optional keys not shown: sink_node, coop_load_threshold_us (2x median load),\n\
         # reassoc_period_us (10 beacons), coop_broadcast_interval_us (5 beacons),\n\
         # coop_range_m (cs_range_m), on_at, off_at, stop_us.\n\n",
    );
    write_common(&mut out, &sc);
    out.push_str(
        "\n# [node]\n# id = 1\n# kind = mesh_ap            # mesh_router | mesh_ap | station\n\
         # position = 0, 0\n# channel = 1              # APs only, 1..=12\n\
         \n# [link]\n# a = 1\n# b = 2\n# rate_mbps = 12           # 6 | 12\n\
         \n# [traffic]\n# kind = cbr               # cbr | ftp | voip\n# source = 10\n\
         # destination = sink\n# rate_kbps = 1024         # cbr\n# file_size_kb = 500       # ftp\n\
         # start_us = 0\n# frame_payload_bits = 8192  # 1280 for voip\n",
    );
    out
}
