use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::{self, Write};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::event::{EventKind, EventQueue, MediumId};
use super::metrics::{
    ConservationSample, Fate, FrameRecord, LoadSample, Mean, RunMetrics, WeightSample,
};
use super::rng::{substream, Purpose};
use super::trace::Trace;
use crate::airtime::{
    downlink_load, uplink_load, AirtimeError, AirtimeParams, ApLoadState,
    StationLinkSample,
};
use crate::association::{
    association_cost, crosslayer_cost, decide_airtime, decide_crosslayer, decide_rssi,
    should_reassociate, AssocCause, AssocError, CandidateAp,
};
use crate::balancer::{laba_exchange, BalancerConfig, BalancerError, BalancerState};
use crate::channel::{contention_domains, LinkQuality, Radio, MAX_ERROR_PROB};
use crate::coop::{decode_payload, encode_payload, probe_request_response, AssocTable, AssocTableEntry, CoopError};
use crate::ids::{Channel, NodeId};
use crate::routing::{build_graph, BackboneGraph, RouteTable, RoutingError};
use crate::scenario::{AssocPolicy, Endpoint, NodeKind, Scenario, ScenarioError, TrafficKind};

/// Attempts beyond the first before a frame is dropped.
pub const MAX_RETRIES: u32 = 7;
/// Backoff slots drawn from `0..BACKOFF_SLOTS`.
pub const BACKOFF_SLOTS: u32 = 16;
/// Frames of one FTP transfer outstanding at once.
pub const FTP_WINDOW: u64 = 8;
pub const VOIP_INTERVAL_US: u64 = 20_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("setup: {0}")]
    Setup(#[from] RoutingError),
    #[error("at {time_us} us during {event}: {fault}")]
    Event { time_us: u64, event: &'static str, fault: Fault },
    #[error("trace output: {0}")]
    Trace(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum Fault {
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Airtime(#[from] AirtimeError),
    #[error(transparent)]
    Assoc(#[from] AssocError),
    #[error(transparent)]
    Balancer(#[from] BalancerError),
    #[error(transparent)]
    Coop(#[from] CoopError),
}

type Step<T = ()> = Result<T, Fault>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Success,
    Collision,
    Error,
}

#[derive(Debug, Clone)]
struct Queued {
    frame: usize,
    retries: u32,
    enq_us: u64,
    hol_us: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum IfaceRole {
    StationAccess,
    ApAccess,
    Backbone { peer: usize },
}

struct Iface {
    owner: usize,
    role: IfaceRole,
    medium: Option<MediumId>,
    queue: VecDeque<Queued>,
    last_departure_us: u64,
    backoff: ChaCha8Rng,
    error: ChaCha8Rng,
}

#[derive(Debug, Clone, Copy)]
struct Attempt {
    iface: usize,
    frame: usize,
    target: usize,
    outcome: Outcome,
}

struct Medium {
    members: BTreeSet<usize>,
    busy_until: u64,
    scheduled: bool,
    inflight: Vec<Attempt>,
    last_success_end: u64,
    /// Quality of a backbone link; access media look up per station.
    link: Option<LinkQuality>,
}

struct Ap {
    on: bool,
    iface: usize,
    medium: MediumId,
    channel: Channel,
    load: ApLoadState<f64>,
    /// Stations completing a handoff toward this AP.
    incoming: BTreeSet<usize>,
    /// Uplink attempt outcomes (time, failed) inside the error window.
    window: VecDeque<(u64, bool)>,
    est_error: f64,
    balancer: BalancerState<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Handoff {
    target: usize,
    start_us: u64,
    end_us: u64,
    reassoc: bool,
}

struct Sta {
    on: bool,
    iface: usize,
    ap: Option<usize>,
    handoff: Option<Handoff>,
    weights: BalancerState<f64>,
    table: AssocTable,
    reeval: bool,
    ever_associated: bool,
}

struct FtpState {
    frames_per_file: u64,
    sent_in_file: u64,
    outstanding: u64,
    wake_scheduled: bool,
}

struct Generator {
    src: Endpoint,
    dst: Endpoint,
    bits: u64,
    interval_us: f64,
    phase_us: u64,
    next_k: u64,
    start_us: u64,
    stop_us: u64,
    ftp: Option<FtpState>,
}

struct World<'s> {
    sc: &'s Scenario,
    q: EventQueue,
    ids: Vec<NodeId>,
    kinds: Vec<NodeKind>,
    index: BTreeMap<NodeId, usize>,
    aps: Vec<Option<Ap>>,
    stas: Vec<Option<Sta>>,
    ifaces: Vec<Iface>,
    media: Vec<Medium>,
    backbone_iface: BTreeMap<(usize, usize), usize>,
    /// Usable access links keyed by (station, AP).
    links: BTreeMap<(usize, usize), LinkQuality>,
    in_range: Vec<Vec<usize>>,
    coop_neighbors: Vec<Vec<usize>>,
    ap_neighbors: BTreeMap<NodeId, BTreeSet<NodeId>>,
    graph: BackboneGraph,
    routes: RouteTable,
    sink: Option<usize>,
    gens: Vec<Generator>,
    frames: Vec<FrameRecord>,
    m: Totals,
}

#[derive(Default)]
struct Totals {
    generated_bits: u64,
    generated_frames: u64,
    delivered_bits: u64,
    dropped_bits: u64,
    by_fate: [u64; 5],
    tx_delay: Mean,
    last_sample_us: u64,
    last_sample_delivered_bits: u64,
    throughput_series: Vec<(u64, f64)>,
    conservation: Vec<ConservationSample>,
    load_series: Vec<LoadSample>,
    balance_series: Vec<(u64, f64)>,
    handoff_delays: Vec<u64>,
    join_delays: Vec<u64>,
    weight_samples: Vec<WeightSample>,
    overlaps: u64,
    events: u64,
}

fn frame_airtime_us(params: &AirtimeParams<f64>, q: &LinkQuality, bits: u64) -> u64 {
    (params.o_ca_us + params.o_p_us + bits as f64 / q.rate_mbps).ceil() as u64
}

/// Runs a scenario to completion.
pub fn run(scenario: &Scenario) -> Result<RunMetrics, SimError> {
    run_traced(scenario, None)
}

/// Runs a scenario, writing one line per event to `trace` when given.
pub fn run_traced(scenario: &Scenario, trace: Option<&mut dyn Write>) -> Result<RunMetrics, SimError> {
    scenario.validate()?;
    let mut w = World::new(scenario)?;
    let mut trace = Trace::new(trace);
    w.init();
    while let Some(t) = w.q.peek_time() {
        if t >= scenario.duration_us {
            break;
        }
        let ev = w.q.pop().expect("peeked");
        w.m.events += 1;
        let detail = w.handle(&ev.kind).map_err(|fault| SimError::Event {
            time_us: ev.time_us,
            event: ev.kind.name(),
            fault,
        })?;
        trace.record(ev.time_us, ev.seq, ev.kind.name(), &ev.kind.subject(), &detail)?;
    }
    w.sample(scenario.duration_us);
    let hash = trace.finish()?;
    Ok(w.into_metrics(hash))
}

impl<'s> World<'s> {
    fn new(sc: &'s Scenario) -> Result<Self, SimError> {
        let ids: Vec<NodeId> = sc.nodes.iter().map(|n| n.id).collect();
        let kinds: Vec<NodeKind> = sc.nodes.iter().map(|n| n.kind).collect();
        let index: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let n = ids.len();
        let graph = build_graph(sc)?;
        let routes = RouteTable::compute(&graph, 0, 2 * sc.laba_interval_us);
        let policy = &sc.policy;
        let bcfg = BalancerConfig {
            threshold_t: policy.balance_threshold_t,
            w1_init: policy.w1_init,
            w1_max: policy.w1_max,
            step_delta: policy.step_delta,
            relax_patience: policy.relax_patience,
        };
        let balancer = BalancerState::new(bcfg).map_err(|e| ScenarioError::Validation {
            field: "policy".into(),
            message: e.to_string(),
        })?;

        let mut w = World {
            sc,
            q: EventQueue::new(),
            ids,
            kinds,
            index,
            aps: (0..n).map(|_| None).collect(),
            stas: (0..n).map(|_| None).collect(),
            ifaces: Vec::new(),
            media: Vec::new(),
            backbone_iface: BTreeMap::new(),
            links: BTreeMap::new(),
            in_range: vec![Vec::new(); n],
            coop_neighbors: vec![Vec::new(); n],
            ap_neighbors: sc.ap_neighbors(),
            graph,
            routes,
            sink: None,
            gens: Vec::new(),
            frames: Vec::new(),
            m: Totals::default(),
        };
        w.sink = sc.sink_node.map(|s| w.index[&s]);

        // Access media: one per cluster of co-channel APs in carrier-sense range.
        let radios: Vec<Radio> = sc
            .aps()
            .map(|a| Radio { id: a.id, position: a.position, channel: a.channel })
            .collect();
        let mut ap_medium = BTreeMap::new();
        for d in contention_domains(&radios, sc.channel.cs_range_m) {
            let m = w.new_medium(None);
            for id in d.members {
                ap_medium.insert(id, m);
            }
        }
        for (i, spec) in sc.nodes.iter().enumerate() {
            let seed = sc.seed;
            match spec.kind {
                NodeKind::MeshAp => {
                    let m = ap_medium[&spec.id];
                    let iface = w.new_iface(i, IfaceRole::ApAccess, Some(m), 0);
                    w.media[m].members.insert(iface);
                    let _ = seed;
                    w.aps[i] = Some(Ap {
                        on: spec.on_at.is_none(),
                        iface,
                        medium: m,
                        channel: spec.channel.expect("validated AP channel"),
                        load: ApLoadState::default(),
                        incoming: BTreeSet::new(),
                        window: VecDeque::new(),
                        est_error: 0.0,
                        balancer: balancer.clone(),
                    });
                }
                NodeKind::Station => {
                    let iface = w.new_iface(i, IfaceRole::StationAccess, None, 0);
                    w.stas[i] = Some(Sta {
                        on: false,
                        iface,
                        ap: None,
                        handoff: None,
                        weights: balancer.clone(),
                        table: AssocTable::new(spec.id),
                        reeval: false,
                        ever_associated: false,
                    });
                }
                NodeKind::MeshRouter => {}
            }
        }
        for (k, l) in sc.backbone_links.iter().enumerate() {
            let (a, b) = (w.index[&l.a], w.index[&l.b]);
            let q = sc
                .channel
                .backbone_quality(sc.nodes[a].position, sc.nodes[b].position, l.rate_mbps)
                .map_err(|e| RoutingError::Link(l.a, l.b, e))?;
            let m = w.new_medium(Some(q));
            let sub = 1 + k as u16;
            let ia = w.new_iface(a, IfaceRole::Backbone { peer: b }, Some(m), sub);
            let ib = w.new_iface(b, IfaceRole::Backbone { peer: a }, Some(m), sub);
            w.media[m].members.extend([ia, ib]);
            w.backbone_iface.insert((a, b), ia);
            w.backbone_iface.insert((b, a), ib);
        }

        let station_idx: Vec<usize> = (0..n).filter(|&i| w.kinds[i] == NodeKind::Station).collect();
        let ap_idx: Vec<usize> = (0..n).filter(|&i| w.kinds[i] == NodeKind::MeshAp).collect();
        for &s in &station_idx {
            for &a in &ap_idx {
                let ch = w.aps[a].as_ref().unwrap().channel;
                if let Ok(q) = sc.channel.link_quality(sc.nodes[s].position, sc.nodes[a].position, ch) {
                    w.links.insert((s, a), q);
                    w.in_range[s].push(a);
                }
            }
            w.in_range[s].sort_by_key(|&a| w.ids[a]);
            let range = sc.coop_range_m();
            w.coop_neighbors[s] = station_idx
                .iter()
                .copied()
                .filter(|&o| o != s && sc.nodes[s].position.distance(&sc.nodes[o].position) <= range)
                .collect();
        }

        for t in &sc.traffic {
            let stop_us = t.stop_us.unwrap_or(u64::MAX);
            let base = |src, dst, interval_us, ftp| Generator {
                src,
                dst,
                bits: t.frame_payload_bits,
                interval_us,
                phase_us: 0,
                next_k: 0,
                start_us: t.start_us,
                stop_us,
                ftp,
            };
            match t.kind {
                TrafficKind::Cbr => {
                    let rate = t.rate_kbps.expect("validated cbr rate");
                    let interval = t.frame_payload_bits as f64 * 1000.0 / rate;
                    w.gens.push(base(t.source, t.destination, interval, None));
                }
                TrafficKind::VoipLike => {
                    let iv = VOIP_INTERVAL_US as f64;
                    w.gens.push(base(t.source, t.destination, iv, None));
                    w.gens.push(base(t.destination, t.source, iv, None));
                }
                TrafficKind::FtpLike => {
                    let kb = t.file_size_kb.expect("validated ftp size");
                    let bits = kb * 1024.0 * 8.0;
                    let frames = (bits / t.frame_payload_bits as f64).ceil().max(1.0) as u64;
                    let ftp = FtpState {
                        frames_per_file: frames,
                        sent_in_file: 0,
                        outstanding: 0,
                        wake_scheduled: true,
                    };
                    w.gens.push(base(t.source, t.destination, 0.0, Some(ftp)));
                }
            }
        }
        for (g, gen) in w.gens.iter_mut().enumerate() {
            if gen.interval_us > 0.0 {
                let mut r = substream(sc.seed, g as u32, Purpose::Traffic, 0);
                gen.phase_us = r.gen_range(0..gen.interval_us.ceil().max(1.0) as u64);
            }
        }
        Ok(w)
    }

    fn new_medium(&mut self, link: Option<LinkQuality>) -> MediumId {
        self.media.push(Medium {
            members: BTreeSet::new(),
            busy_until: 0,
            scheduled: false,
            inflight: Vec::new(),
            last_success_end: 0,
            link,
        });
        self.media.len() - 1
    }

    fn new_iface(&mut self, owner: usize, role: IfaceRole, medium: Option<MediumId>, sub: u16) -> usize {
        let id = self.sc.nodes[owner].id.0;
        self.ifaces.push(Iface {
            owner,
            role,
            medium,
            queue: VecDeque::new(),
            last_departure_us: 0,
            backoff: substream(self.sc.seed, id, Purpose::Backoff, sub),
            error: substream(self.sc.seed, id, Purpose::Error, sub),
        });
        self.ifaces.len() - 1
    }

    fn sta(&self, i: usize) -> &Sta {
        self.stas[i].as_ref().expect("station index")
    }

    fn sta_mut(&mut self, i: usize) -> &mut Sta {
        self.stas[i].as_mut().expect("station index")
    }

    fn ap(&self, i: usize) -> &Ap {
        self.aps[i].as_ref().expect("AP index")
    }

    fn ap_mut(&mut self, i: usize) -> &mut Ap {
        self.aps[i].as_mut().expect("AP index")
    }

    fn now(&self) -> u64 {
        self.q.now()
    }

    fn init(&mut self) {
        let sc = self.sc;
        let beacon = sc.beacon_interval_us;
        for (i, spec) in sc.nodes.iter().enumerate() {
            let id = spec.id;
            let mut phase = substream(sc.seed, id.0, Purpose::Phase, 0);
            match spec.kind {
                NodeKind::MeshAp => {
                    if let Some(t) = spec.on_at {
                        self.q.schedule(t, EventKind::ChurnOn(id));
                    }
                    if let Some(t) = spec.off_at {
                        self.q.schedule(t, EventKind::ChurnOff(id));
                    }
                    self.q.schedule(phase.gen_range(0..beacon), EventKind::BeaconTx(id));
                }
                NodeKind::Station => {
                    self.q.schedule(spec.on_at.unwrap_or(0), EventKind::ChurnOn(id));
                    if let Some(t) = spec.off_at {
                        self.q.schedule(t, EventKind::ChurnOff(id));
                    }
                    let period = sc.reassoc_period_us();
                    self.q.schedule(phase.gen_range(0..period), EventKind::AssocEval(id));
                    if sc.policy.cooperative {
                        let iv = sc.coop_broadcast_interval_us();
                        self.q.schedule(phase.gen_range(0..iv), EventKind::CoopBroadcast(id));
                    }
                }
                NodeKind::MeshRouter => {}
            }
            let _ = i;
        }
        self.q.schedule(sc.laba_interval_us, EventKind::LabaTx);
        self.q.schedule(sc.laba_interval_us, EventKind::RouteRefresh);
        self.q.schedule(sc.sample_interval_us, EventKind::MetricSample);
        for g in 0..self.gens.len() {
            let gen = &self.gens[g];
            self.q.schedule(gen.start_us + gen.phase_us, EventKind::TrafficArrival(g));
        }
    }

    fn handle(&mut self, kind: &EventKind) -> Step<String> {
        match kind {
            EventKind::FrameTx(m) => self.frame_tx(*m),
            EventKind::FrameDone(m) => self.frame_done(*m),
            EventKind::BeaconTx(id) => self.beacon(self.index[id]),
            EventKind::LabaTx => self.laba(),
            EventKind::CoopBroadcast(id) => self.coop_broadcast(self.index[id]),
            EventKind::CoopDeliver { to, payload } => {
                let s = self.index[to];
                if self.sta(s).on {
                    let entries = decode_payload(payload)?;
                    self.sta_mut(s).table.merge_received(&entries);
                }
                Ok(String::new())
            }
            EventKind::TrafficArrival(g) => self.traffic(*g),
            EventKind::AssocEval(id) => self.assoc_eval(self.index[id]),
            EventKind::HandoffDone(id) => self.handoff_done(self.index[id]),
            EventKind::ChurnOn(id) => self.churn_on(self.index[id]),
            EventKind::ChurnOff(id) => self.churn_off(self.index[id]),
            EventKind::RouteRefresh => {
                let now = self.now();
                self.routes = RouteTable::compute(&self.graph, now, 2 * self.sc.laba_interval_us);
                self.q.schedule(now + self.sc.laba_interval_us, EventKind::RouteRefresh);
                Ok(String::new())
            }
            EventKind::MetricSample => {
                let now = self.now();
                self.sample(now);
                self.q.schedule(now + self.sc.sample_interval_us, EventKind::MetricSample);
                Ok(String::new())
            }
        }
    }

    // ----- medium access -------------------------------------------------

    fn kick(&mut self, m: MediumId) {
        let now = self.now();
        let med = &mut self.media[m];
        if !med.scheduled && med.inflight.is_empty() {
            med.scheduled = true;
            let at = med.busy_until.max(now);
            self.q.schedule(at, EventKind::FrameTx(m));
        }
    }

    /// Queue position and receiver of the frame an interface would send now.
    fn head(&mut self, iface: usize) -> Step<Option<(usize, usize)>> {
        let owner = self.ifaces[iface].owner;
        match self.ifaces[iface].role {
            IfaceRole::StationAccess => {
                let ap = self.sta(owner).ap;
                Ok(match (self.ifaces[iface].queue.is_empty(), ap) {
                    (false, Some(a)) => Some((0, a)),
                    _ => None,
                })
            }
            IfaceRole::Backbone { peer } => {
                Ok((!self.ifaces[iface].queue.is_empty()).then_some((0, peer)))
            }
            IfaceRole::ApAccess => {
                // Frames whose station moved elsewhere are re-routed first.
                let mut moved = Vec::new();
                let queue = std::mem::take(&mut self.ifaces[iface].queue);
                let mut kept = VecDeque::with_capacity(queue.len());
                for q in queue {
                    let dst = self.dst_station(q.frame);
                    if dst.and_then(|d| self.serving_ap(d)) == Some(owner) {
                        kept.push_back(q);
                    } else {
                        moved.push(q.frame);
                    }
                }
                self.ifaces[iface].queue = kept;
                for f in moved {
                    self.route(f, owner)?;
                }
                let pos = self.ifaces[iface].queue.iter().position(|q| {
                    let d = self.dst_station(q.frame).expect("downlink frame");
                    self.sta(d).ap == Some(owner)
                });
                Ok(pos.map(|p| (p, self.dst_station(self.ifaces[iface].queue[p].frame).unwrap())))
            }
        }
    }

    fn dst_station(&self, f: usize) -> Option<usize> {
        match self.frames[f].dst {
            Endpoint::Node(d) => {
                let i = self.index[&d];
                (self.kinds[i] == NodeKind::Station).then_some(i)
            }
            Endpoint::Sink => None,
        }
    }

    fn link_for(&self, iface: usize, target: usize) -> (&AirtimeParams<f64>, LinkQuality) {
        let i = &self.ifaces[iface];
        match i.role {
            IfaceRole::Backbone { .. } => {
                (&self.sc.backbone_airtime, self.media[i.medium.unwrap()].link.unwrap())
            }
            IfaceRole::StationAccess => (&self.sc.access_airtime, self.links[&(i.owner, target)]),
            IfaceRole::ApAccess => (&self.sc.access_airtime, self.links[&(target, i.owner)]),
        }
    }

    fn frame_tx(&mut self, m: MediumId) -> Step<String> {
        self.media[m].scheduled = false;
        if !self.media[m].inflight.is_empty() {
            return Ok("busy".into());
        }
        let now = self.now();
        let members: Vec<usize> = self.media[m].members.iter().copied().collect();
        let mut contenders = Vec::new();
        for i in members {
            if let Some((pos, target)) = self.head(i)? {
                contenders.push((i, pos, target));
            }
        }
        if contenders.is_empty() {
            return Ok("idle".into());
        }
        let slots: Vec<u32> = contenders
            .iter()
            .map(|&(i, _, _)| self.ifaces[i].backoff.gen_range(0..BACKOFF_SLOTS))
            .collect();
        let min = *slots.iter().min().unwrap();
        let winners: Vec<(usize, usize, usize)> = contenders
            .iter()
            .zip(&slots)
            .filter(|(_, &s)| s == min)
            .map(|(c, _)| *c)
            .collect();
        for &(i, pos, _) in &contenders {
            let last = self.ifaces[i].last_departure_us;
            let q = &mut self.ifaces[i].queue[pos];
            q.hol_us.get_or_insert(q.enq_us.max(last));
        }
        let collided = winners.len() > 1;
        let mut busy = 0;
        let mut attempts = Vec::with_capacity(winners.len());
        for &(i, pos, target) in &winners {
            let frame = self.ifaces[i].queue[pos].frame;
            let (params, q) = self.link_for(i, target);
            let dur = frame_airtime_us(params, &q, self.frames[frame].size_bits);
            busy = busy.max(dur);
            let outcome = if collided {
                Outcome::Collision
            } else {
                let u: f64 = self.ifaces[i].error.gen();
                if u < q.error_prob {
                    Outcome::Error
                } else {
                    Outcome::Success
                }
            };
            if outcome == Outcome::Success {
                let med = &mut self.media[m];
                if now < med.last_success_end {
                    self.m.overlaps += 1;
                }
                med.last_success_end = now + dur;
            }
            attempts.push(Attempt { iface: i, frame, target, outcome });
        }
        let detail = match (collided, attempts[0].outcome) {
            (true, _) => format!("collision n={} slot={min}", attempts.len()),
            (false, o) => format!("{o:?} f{} i{} slot={min}", attempts[0].frame, attempts[0].iface),
        };
        let med = &mut self.media[m];
        med.busy_until = now + busy;
        med.inflight = attempts;
        self.q.schedule(now + busy, EventKind::FrameDone(m));
        Ok(detail)
    }

    fn frame_done(&mut self, m: MediumId) -> Step<String> {
        let now = self.now();
        let attempts = std::mem::take(&mut self.media[m].inflight);
        for a in &attempts {
            let Some(pos) = self.ifaces[a.iface].queue.iter().position(|q| q.frame == a.frame) else {
                continue;
            };
            let owner = self.ifaces[a.iface].owner;
            let role = self.ifaces[a.iface].role;
            let uplink_ap = (role == IfaceRole::StationAccess).then_some(a.target);
            if a.outcome == Outcome::Success {
                let q = self.ifaces[a.iface].queue.remove(pos).unwrap();
                self.ifaces[a.iface].last_departure_us = now;
                self.m.tx_delay.add((now - q.hol_us.unwrap_or(q.enq_us)) as f64);
                if let Some(ap) = uplink_ap {
                    self.ap_mut(ap).window.push_back((now, false));
                }
                let rec = &mut self.frames[a.frame];
                match role {
                    IfaceRole::StationAccess => rec.client_sent_us = Some(now),
                    IfaceRole::Backbone { .. } => rec.backbone_hops += 1,
                    IfaceRole::ApAccess => {}
                }
                if rec.ap == Some(self.ids[owner]) && rec.ap_done_us.is_none() {
                    rec.ap_done_us = Some(now);
                }
                self.arrive(a.frame, a.target)?;
            } else {
                if let Some(ap) = uplink_ap {
                    self.ap_mut(ap).window.push_back((now, true));
                }
                self.frames[a.frame].retries += 1;
                let q = &mut self.ifaces[a.iface].queue[pos];
                q.retries += 1;
                if q.retries > MAX_RETRIES {
                    self.ifaces[a.iface].queue.remove(pos);
                    let fate = if a.outcome == Outcome::Collision {
                        Fate::DroppedRetry
                    } else {
                        Fate::DroppedError
                    };
                    self.finish(a.frame, fate);
                }
            }
        }
        self.kick(m);
        Ok(format!("{}", attempts.len()))
    }

    // ----- frame movement ------------------------------------------------

    fn enqueue(&mut self, iface: usize, f: usize) {
        let now = self.now();
        let owner = self.ifaces[iface].owner;
        if self.kinds[owner] == NodeKind::MeshAp && self.frames[f].ap.is_none() {
            self.frames[f].ap = Some(self.ids[owner]);
            self.frames[f].ap_arrival_us = Some(now);
        }
        if self.ifaces[iface].queue.len() >= self.sc.queue_limit {
            self.finish(f, Fate::DroppedOverflow);
            return;
        }
        self.ifaces[iface].queue.push_back(Queued { frame: f, retries: 0, enq_us: now, hol_us: None });
        if let Some(m) = self.ifaces[iface].medium {
            self.kick(m);
        }
    }

    /// AP a station is associated with or moving to.
    fn serving_ap(&self, s: usize) -> Option<usize> {
        let st = self.sta(s);
        if !st.on {
            return None;
        }
        st.ap.or(st.handoff.map(|h| h.target))
    }

    /// Forwards a frame held by backbone node `at`.
    fn route(&mut self, f: usize, at: usize) -> Step {
        match self.frames[f].dst {
            Endpoint::Sink => match self.sink {
                None if self.kinds[at] == NodeKind::MeshAp => self.finish(f, Fate::Delivered),
                None => self.finish(f, Fate::DroppedNoAssoc),
                Some(s) if s == at => self.finish(f, Fate::Delivered),
                Some(s) => self.toward(f, at, s)?,
            },
            Endpoint::Node(d) => {
                let di = self.index[&d];
                if di == at {
                    self.finish(f, Fate::Delivered);
                } else if self.kinds[di] == NodeKind::Station {
                    match self.serving_ap(di) {
                        None => self.finish(f, Fate::DroppedNoAssoc),
                        Some(a) if a == at => {
                            if self.ap(a).on {
                                let iface = self.ap(a).iface;
                                self.enqueue(iface, f);
                            } else {
                                self.finish(f, Fate::DroppedNoAssoc);
                            }
                        }
                        Some(a) => self.toward(f, at, a)?,
                    }
                } else {
                    self.toward(f, at, di)?;
                }
            }
        }
        Ok(())
    }

    fn toward(&mut self, f: usize, at: usize, target: usize) -> Step {
        let now = self.now();
        let nh = self
            .routes
            .next_hop(self.ids[at], self.ids[target], now)?
            .expect("distinct endpoints have a next hop");
        let iface = self.backbone_iface[&(at, self.index[&nh])];
        self.enqueue(iface, f);
        Ok(())
    }

    fn arrive(&mut self, f: usize, node: usize) -> Step {
        if self.kinds[node] == NodeKind::Station {
            let fate = if self.frames[f].dst == Endpoint::Node(self.ids[node]) {
                Fate::Delivered
            } else {
                Fate::DroppedNoAssoc
            };
            self.finish(f, fate);
            Ok(())
        } else {
            self.route(f, node)
        }
    }

    fn finish(&mut self, f: usize, fate: Fate) {
        let now = self.now();
        let rec = &mut self.frames[f];
        debug_assert!(rec.fate.is_none(), "fate assigned twice");
        rec.fate = Some(fate);
        rec.fate_us = Some(now);
        if rec.ap_arrival_us.is_some() && rec.ap_done_us.is_none() {
            rec.ap_done_us = Some(now);
        }
        self.m.by_fate[fate.index()] += 1;
        if fate == Fate::Delivered {
            self.m.delivered_bits += rec.size_bits;
        } else {
            self.m.dropped_bits += rec.size_bits;
        }
        let g = rec.flow;
        let delay = if fate == Fate::DroppedNoAssoc { self.sc.beacon_interval_us } else { 0 };
        if let Some(ftp) = self.gens[g].ftp.as_mut() {
            ftp.outstanding -= 1;
            if !ftp.wake_scheduled {
                ftp.wake_scheduled = true;
                self.q.schedule(now + delay, EventKind::TrafficArrival(g));
            }
        }
    }

    // ----- traffic -------------------------------------------------------

    fn endpoints_on(&self, g: usize) -> bool {
        let gen = &self.gens[g];
        [gen.src, gen.dst].into_iter().all(|e| match e {
            Endpoint::Node(n) => {
                let i = self.index[&n];
                self.stas[i].as_ref().is_none_or(|s| s.on)
            }
            Endpoint::Sink => true,
        })
    }

    fn create_frame(&mut self, g: usize) -> Step {
        let now = self.now();
        let gen = &self.gens[g];
        let f = self.frames.len();
        self.frames.push(FrameRecord {
            flow: g,
            size_bits: gen.bits,
            created_us: now,
            src: gen.src,
            dst: gen.dst,
            retries: 0,
            fate: None,
            fate_us: None,
            client_sent_us: None,
            ap: None,
            ap_arrival_us: None,
            ap_done_us: None,
            backbone_hops: 0,
        });
        self.m.generated_bits += gen.bits;
        self.m.generated_frames += 1;
        match gen.src {
            Endpoint::Node(n) => {
                let i = self.index[&n];
                if self.kinds[i] == NodeKind::Station {
                    let st = self.sta(i);
                    if st.ap.is_some() || st.handoff.is_some() {
                        let iface = st.iface;
                        self.enqueue(iface, f);
                    } else {
                        self.finish(f, Fate::DroppedNoAssoc);
                    }
                } else {
                    self.route(f, i)?;
                }
            }
            Endpoint::Sink => match self.sink {
                Some(s) => self.route(f, s)?,
                None => match self.dst_station(f).and_then(|d| self.serving_ap(d)) {
                    Some(a) => self.route(f, a)?,
                    None => self.finish(f, Fate::DroppedNoAssoc),
                },
            },
        }
        Ok(())
    }

    fn traffic(&mut self, g: usize) -> Step<String> {
        let now = self.now();
        let active = self.endpoints_on(g) && now < self.gens[g].stop_us;
        if self.gens[g].ftp.is_some() {
            self.gens[g].ftp.as_mut().unwrap().wake_scheduled = false;
            if now >= self.gens[g].stop_us {
                return Ok("stopped".into());
            }
            if !active {
                let ftp = self.gens[g].ftp.as_mut().unwrap();
                ftp.wake_scheduled = true;
                self.q.schedule(now + self.sc.beacon_interval_us, EventKind::TrafficArrival(g));
                return Ok("paused".into());
            }
            let ftp = self.gens[g].ftp.as_mut().unwrap();
            if ftp.sent_in_file == ftp.frames_per_file && ftp.outstanding == 0 {
                ftp.sent_in_file = 0;
            }
            let budget = FTP_WINDOW
                .saturating_sub(ftp.outstanding)
                .min(ftp.frames_per_file - ftp.sent_in_file);
            ftp.outstanding += budget;
            ftp.sent_in_file += budget;
            for _ in 0..budget {
                self.create_frame(g)?;
            }
            return Ok(format!("ftp {budget}"));
        }
        if active {
            self.create_frame(g)?;
        }
        let gen = &mut self.gens[g];
        gen.next_k += 1;
        let next = gen.start_us + gen.phase_us + (gen.next_k as f64 * gen.interval_us).round() as u64;
        if next < gen.stop_us {
            self.q.schedule(next, EventKind::TrafficArrival(g));
        }
        Ok(if active { "frame" } else { "skip" }.into())
    }

    // ----- APs -----------------------------------------------------------

    fn refresh_ap(&mut self, a: usize) -> Step {
        let now = self.now();
        let window = self.sc.error_window_us;
        let params = self.sc.access_airtime;
        let mut samples = BTreeMap::new();
        let mut inv_rate = 0.0;
        let mut link_err = 0.0;
        let assoc: Vec<usize> = self.ap(a).load.associated.iter().map(|id| self.index[id]).collect();
        for &s in &assoc {
            let q = self.links[&(s, a)];
            samples.insert(self.ids[s], StationLinkSample::new(q.rate_mbps, q.error_prob));
            inv_rate += 1.0 / q.rate_mbps;
            link_err += q.error_prob;
        }
        let ap = self.ap_mut(a);
        while ap.window.front().is_some_and(|&(t, _)| t + window < now) {
            ap.window.pop_front();
        }
        let n = assoc.len();
        if n > 0 {
            let fails = ap.window.iter().filter(|w| w.1).count() as f64;
            let attempts = ap.window.len() as f64;
            let prior = link_err / n as f64;
            ap.est_error = ((fails + prior) / (attempts + 1.0)).min(MAX_ERROR_PROB);
            ap.load.avg_up_rate_mbps = n as f64 / inv_rate;
        } else {
            ap.est_error = 0.0;
            ap.load.avg_up_rate_mbps = 0.0;
        }
        ap.load.avg_up_error = ap.est_error;
        ap.load.per_station_samples = samples;
        ap.load.recompute(&params)?;
        Ok(())
    }

    fn beacon(&mut self, a: usize) -> Step<String> {
        let now = self.now();
        self.q.schedule(now + self.sc.beacon_interval_us, EventKind::BeaconTx(self.ids[a]));
        if !self.ap(a).on {
            return Ok("off".into());
        }
        self.refresh_ap(a)?;
        let ap = self.ap(a);
        let (channel, b) = (ap.channel, ap.balancer.beacon_annotation());
        let load = ap.load.cumulative_cost();
        let n = ap.load.associated.len();
        if self.sc.policy.cooperative {
            let entry = AssocTableEntry {
                ap_mac: self.ids[a],
                channel,
                load_us: load.round() as u64,
                timestamp_us: now,
            };
            for s in 0..self.stas.len() {
                let hears = match &self.stas[s] {
                    Some(st) if st.on => {
                        st.ap.is_some_and(|cur| self.ap(cur).channel == channel)
                            && self.links.contains_key(&(s, a))
                    }
                    _ => false,
                };
                if hears {
                    self.sta_mut(s).table.merge_received(&[entry]);
                }
            }
        }
        if self.sc.policy.load_balancing {
            let members: Vec<usize> = self.ap(a).load.associated.iter().map(|id| self.index[id]).collect();
            for s in members {
                let st = self.sta_mut(s);
                let before = st.weights.w1;
                let (w1, w2) = st.weights.adapt_weights(b);
                let pending = st.reeval;
                st.reeval = w1 != before;
                self.m.weight_samples.push(WeightSample {
                    time_us: now,
                    station: self.ids[s],
                    heard_b: b,
                    w1_before: before,
                    w1,
                    w2,
                });
                if pending && self.sta(s).ap == Some(a) {
                    self.reassoc(s, AssocCause::BalancerTriggered)?;
                }
            }
        }
        Ok(format!("n={n} load={load:.0} b={b:.4}"))
    }

    fn laba(&mut self) -> Step<String> {
        let now = self.now();
        self.q.schedule(now + self.sc.laba_interval_us, EventKind::LabaTx);
        let on: Vec<usize> = (0..self.aps.len()).filter(|&a| self.aps[a].as_ref().is_some_and(|x| x.on)).collect();
        let mut loads = BTreeMap::new();
        for &a in &on {
            self.refresh_ap(a)?;
            loads.insert(self.ids[a], self.ap(a).load.cumulative_cost());
        }
        let views = laba_exchange(&loads, &self.ap_neighbors, now);
        let mut sum_b = 0.0;
        for &a in &on {
            let view = &views[&self.ids[a]];
            sum_b += self.ap_mut(a).balancer.update_index(view)?;
        }
        self.m.load_series.push(LoadSample { time_us: now, loads: loads.into_iter().collect() });
        if on.is_empty() {
            return Ok("no APs".into());
        }
        let mean = sum_b / on.len() as f64;
        self.m.balance_series.push((now, mean));
        Ok(format!("b={mean:.4}"))
    }

    // ----- stations ------------------------------------------------------

    fn coop_broadcast(&mut self, s: usize) -> Step<String> {
        let now = self.now();
        self.q.schedule(now + self.sc.coop_broadcast_interval_us(), EventKind::CoopBroadcast(self.ids[s]));
        let st = self.sta(s);
        if !st.on || st.table.is_empty() {
            return Ok(String::new());
        }
        let payload = encode_payload(&st.table.broadcast_payload());
        let to: Vec<usize> = self.coop_neighbors[s].iter().copied().filter(|&o| self.sta(o).on).collect();
        for &o in &to {
            self.q.schedule(
                now + self.sc.policy.coop_latency_us,
                EventKind::CoopDeliver { to: self.ids[o], payload: payload.clone() },
            );
        }
        Ok(format!("to={}", to.len()))
    }

    /// Candidate view of AP `a` for station `s`, costs computed as if `s`
    /// were (or stayed) associated with it.
    fn candidate(&self, s: usize, a: usize) -> Step<CandidateAp<f64>> {
        let now = self.now();
        let params = &self.sc.access_airtime;
        let ap = self.ap(a);
        let own = self.links[&(s, a)];
        let mut cell: BTreeSet<usize> = ap.load.associated.iter().map(|id| self.index[id]).collect();
        cell.extend(ap.incoming.iter().copied());
        let joining = cell.insert(s);
        let n = cell.len();
        let samples: Vec<StationLinkSample<f64>> = cell
            .iter()
            .map(|&j| {
                let q = self.links[&(j, a)];
                StationLinkSample::new(q.rate_mbps, q.error_prob)
            })
            .collect();
        let inv: f64 = samples.iter().map(|x| 1.0 / x.rate_mbps).sum();
        let err = if joining {
            ((n - 1) as f64 * ap.est_error + own.error_prob) / n as f64
        } else {
            ap.est_error
        };
        let up = uplink_load(params, n as f64 / inv, err, n)?;
        let down = downlink_load(params, &samples)?;
        let rc = match self.sink {
            Some(sink) => self.routes.route_cost(self.ids[a], self.ids[sink], now)?,
            None => 0.0,
        };
        Ok(CandidateAp {
            ap_id: self.ids[a],
            channel: ap.channel,
            rssi_dbm: own.rssi_dbm,
            uplink_cost_us: Some(up),
            downlink_cost_us: Some(down),
            route_cost_us: Some(rc),
            beacon_age_us: 0,
        })
    }

    /// Picks an AP for `s`; `None` when nothing better than the current AP
    /// (or nothing at all) is available. The flag tells whether the
    /// cooperative table vouched for the choice.
    fn choose(&mut self, s: usize, cause: AssocCause) -> Step<Option<(usize, bool)>> {
        let now = self.now();
        let policy = &self.sc.policy;
        let current = self.sta(s).ap;
        if policy.association == AssocPolicy::Rssi && current.is_some() {
            return Ok(None);
        }
        let mut cands = Vec::new();
        for &a in &self.in_range[s] {
            if self.ap(a).on {
                cands.push(self.candidate(s, a)?);
            }
        }
        if cands.is_empty() {
            return Ok(None);
        }
        let mut eligible = BTreeSet::new();
        if policy.cooperative {
            let table = &self.sta(s).table;
            if let Some(thr) = policy.coop_load_threshold_us.or_else(|| table.default_load_threshold()) {
                eligible = table
                    .eligible_aps(now, policy.coop_staleness_us, thr)
                    .into_iter()
                    .map(|(id, _)| id)
                    .collect();
            }
            let cur_id = current.map(|c| self.ids[c]);
            if cands.iter().any(|c| eligible.contains(&c.ap_id) && Some(c.ap_id) != cur_id) {
                cands.retain(|c| eligible.contains(&c.ap_id) || Some(c.ap_id) == cur_id);
            }
        }
        let st = self.sta(s);
        let (w1, w2) = (st.weights.w1, st.weights.w2);
        let decision = match policy.association {
            AssocPolicy::Rssi => decide_rssi(&cands, cause)?,
            AssocPolicy::Airtime => decide_airtime(&cands, cause)?,
            AssocPolicy::CrossLayer => decide_crosslayer(&cands, w1, w2, cause)?,
        };
        let chosen = self.index[&decision.chosen_ap];
        if let Some(cur) = current {
            if chosen == cur {
                return Ok(None);
            }
            let cur_cand = cands.iter().find(|c| c.ap_id == self.ids[cur]).expect("current AP in range");
            let cur_score = match policy.association {
                AssocPolicy::CrossLayer => crosslayer_cost(cur_cand, w1, w2)?,
                _ => association_cost(cur_cand)?,
            };
            if !should_reassociate(cur_score, decision.score, policy.hysteresis) {
                return Ok(None);
            }
        }
        Ok(Some((chosen, eligible.contains(&decision.chosen_ap))))
    }

    fn leave(&mut self, s: usize) -> Step {
        let Some(a) = self.sta_mut(s).ap.take() else { return Ok(()) };
        let id = self.ids[s];
        let iface = self.sta(s).iface;
        let ap = self.ap_mut(a);
        ap.load.associated.remove(&id);
        let m = ap.medium;
        self.media[m].members.remove(&iface);
        self.ifaces[iface].medium = None;
        self.refresh_ap(a)
    }

    fn begin_handoff(&mut self, s: usize, target: usize, used_table: bool) -> Step {
        let now = self.now();
        self.leave(s)?;
        let delay = self.sc.policy.handoff.handoff_delay(used_table);
        let st = self.sta_mut(s);
        st.handoff = Some(Handoff {
            target,
            start_us: now,
            end_us: now + delay,
            reassoc: st.ever_associated,
        });
        self.ap_mut(target).incoming.insert(s);
        self.q.schedule(now + delay, EventKind::HandoffDone(self.ids[s]));
        Ok(())
    }

    fn join(&mut self, s: usize, cause: AssocCause) -> Step<String> {
        if self.sc.policy.cooperative {
            let tables: Vec<&AssocTable> = self.coop_neighbors[s]
                .iter()
                .filter_map(|&o| self.stas[o].as_ref())
                .filter(|o| o.on)
                .map(|o| &o.table)
                .collect();
            let response = probe_request_response(&tables);
            self.sta_mut(s).table.merge_received(&response);
        }
        match self.choose(s, cause)? {
            Some((a, used)) => {
                self.begin_handoff(s, a, used)?;
                Ok(format!("join {} table={used}", self.ids[a]))
            }
            None => Ok("no AP".into()),
        }
    }

    fn reassoc(&mut self, s: usize, cause: AssocCause) -> Step<String> {
        match self.choose(s, cause)? {
            Some((a, used)) => {
                self.begin_handoff(s, a, used)?;
                Ok(format!("move {} table={used}", self.ids[a]))
            }
            None => Ok("stay".into()),
        }
    }

    fn assoc_eval(&mut self, s: usize) -> Step<String> {
        let now = self.now();
        self.q.schedule(now + self.sc.reassoc_period_us(), EventKind::AssocEval(self.ids[s]));
        let st = self.sta(s);
        if !st.on || st.handoff.is_some() {
            return Ok(String::new());
        }
        if st.ap.is_none() {
            return self.join(s, AssocCause::InitialJoin);
        }
        self.reassoc(s, AssocCause::PeriodicReassoc)
    }

    fn handoff_done(&mut self, s: usize) -> Step<String> {
        let now = self.now();
        let Some(h) = self.sta(s).handoff.filter(|h| h.end_us == now) else {
            return Ok("stale".into());
        };
        self.sta_mut(s).handoff = None;
        self.ap_mut(h.target).incoming.remove(&s);
        if !self.sta(s).on {
            return Ok("off".into());
        }
        if !self.ap(h.target).on {
            let mut d = self.join(s, AssocCause::InitialJoin)?;
            d.insert_str(0, "target gone; ");
            return Ok(d);
        }
        let id = self.ids[s];
        let iface = self.sta(s).iface;
        let ap = self.ap_mut(h.target);
        ap.load.associated.insert(id);
        let (m, ap_iface) = (ap.medium, ap.iface);
        self.refresh_ap(h.target)?;
        let st = self.sta_mut(s);
        st.ap = Some(h.target);
        st.ever_associated = true;
        self.ifaces[iface].medium = Some(m);
        self.media[m].members.insert(iface);
        let _ = ap_iface;
        self.kick(m);
        let elapsed = now - h.start_us;
        if h.reassoc {
            self.m.handoff_delays.push(elapsed);
        } else {
            self.m.join_delays.push(elapsed);
        }
        Ok(format!("ap={} delay={elapsed}", self.ids[h.target]))
    }

    fn drop_queue(&mut self, iface: usize) {
        let queue = std::mem::take(&mut self.ifaces[iface].queue);
        for q in queue {
            self.finish(q.frame, Fate::DroppedNoAssoc);
        }
    }

    fn churn_on(&mut self, i: usize) -> Step<String> {
        match self.kinds[i] {
            NodeKind::Station => {
                self.sta_mut(i).on = true;
                self.join(i, AssocCause::InitialJoin)
            }
            NodeKind::MeshAp => {
                self.ap_mut(i).on = true;
                Ok("ap on".into())
            }
            NodeKind::MeshRouter => Ok(String::new()),
        }
    }

    fn churn_off(&mut self, i: usize) -> Step<String> {
        match self.kinds[i] {
            NodeKind::Station => {
                self.leave(i)?;
                let st = self.sta_mut(i);
                st.on = false;
                if let Some(h) = st.handoff.take() {
                    self.ap_mut(h.target).incoming.remove(&i);
                }
                let iface = self.sta(i).iface;
                self.drop_queue(iface);
                Ok("sta off".into())
            }
            NodeKind::MeshAp => {
                self.ap_mut(i).on = false;
                let iface = self.ap(i).iface;
                self.drop_queue(iface);
                let members: Vec<usize> = self.ap(i).load.associated.iter().map(|id| self.index[id]).collect();
                for &s in &members {
                    self.leave(s)?;
                }
                for &s in &members {
                    self.join(s, AssocCause::InitialJoin)?;
                }
                Ok(format!("ap off, {} stations displaced", members.len()))
            }
            NodeKind::MeshRouter => Ok(String::new()),
        }
    }

    // ----- metrics -------------------------------------------------------

    fn sample(&mut self, now: u64) {
        let dt = now.saturating_sub(self.m.last_sample_us);
        if dt > 0 {
            let bits = self.m.delivered_bits - self.m.last_sample_delivered_bits;
            self.m.throughput_series.push((now, bits as f64 * 1e6 / dt as f64));
            self.m.last_sample_us = now;
            self.m.last_sample_delivered_bits = self.m.delivered_bits;
        }
        let (mut inflight_bits, mut inflight_frames) = (0, 0);
        for i in &self.ifaces {
            for q in &i.queue {
                inflight_bits += self.frames[q.frame].size_bits;
                inflight_frames += 1;
            }
        }
        let delivered_frames = self.m.by_fate[Fate::Delivered.index()];
        self.m.conservation.push(ConservationSample {
            time_us: now,
            generated_bits: self.m.generated_bits,
            delivered_bits: self.m.delivered_bits,
            dropped_bits: self.m.dropped_bits,
            inflight_bits,
            generated_frames: self.m.generated_frames,
            delivered_frames,
            dropped_frames: self.m.by_fate.iter().sum::<u64>() - delivered_frames,
            inflight_frames,
        });
    }

    fn into_metrics(self, trace_hash: String) -> RunMetrics {
        let mut e2e = Mean::default();
        let mut client = Mean::default();
        let mut ap_access = Mean::default();
        for f in self.frames.iter().filter(|f| f.fate.is_some()) {
            if let Some(d) = f.delivered_us() {
                e2e.add((d - f.created_us) as f64);
            }
            if let Some(t) = f.client_sent_us {
                client.add((t - f.created_us) as f64);
            }
            if let (Some(a), Some(b)) = (f.ap_arrival_us, f.ap_done_us) {
                ap_access.add((b - a) as f64);
            }
        }
        let m = self.m;
        let last = m.conservation.last().copied().unwrap_or_default();
        let mean_b = if m.balance_series.is_empty() {
            1.0
        } else {
            m.balance_series.iter().map(|x| x.1).sum::<f64>() / m.balance_series.len() as f64
        };
        RunMetrics {
            duration_us: self.sc.duration_us,
            throughput_series: m.throughput_series,
            throughput_bps: m.delivered_bits as f64 * 1e6 / self.sc.duration_us as f64,
            avg_tx_delay_us: m.tx_delay.value(),
            avg_client_access_delay_us: client.value(),
            avg_ap_access_delay_us: ap_access.value(),
            avg_e2e_delay_us: e2e.value(),
            generated_bits: m.generated_bits,
            delivered_bits: m.delivered_bits,
            dropped_bits: m.dropped_bits,
            inflight_bits: last.inflight_bits,
            frames_by_fate: m.by_fate,
            ap_load_series: m.load_series,
            balance_series: m.balance_series,
            mean_balance_index: mean_b,
            handoffs: m.handoff_delays.len() as u64,
            joins: m.join_delays.len() as u64,
            handoff_delays_us: m.handoff_delays,
            join_delays_us: m.join_delays,
            weight_samples: m.weight_samples,
            conservation: m.conservation,
            medium_overlaps: m.overlaps,
            events: m.events,
            trace_hash,
            frames: self.frames,
        }
    }
}
