//! Generated scenarios. Each is a pure function of its name and seed.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::ids::{Channel, NodeId, Position};
use crate::scenario::{
    BackboneLink, Endpoint, NodeKind, NodeSpec, Scenario, ScenarioError, TrafficSpec,
};
use crate::sim::rng::{substream, Purpose};

pub const BUILTIN_NAMES: [&str; 3] = ["fourcell", "mesh_ftp", "mesh_voip"];

/// Station count at the end of each fourcell stage.
pub const FOURCELL_STAGES: [usize; 7] = [5, 15, 25, 35, 45, 55, 65];
pub const FOURCELL_STAGE_US: u64 = 200_000;
pub const FOURCELL_CBR_KBPS: f64 = 128.0;
pub const MESH_VOIP_SESSIONS: usize = 24;
pub const MESH_FTP_STATIONS: usize = 12;
pub const MESH_FTP_FILE_KB: f64 = 500.0;

const FIRST_STATION_ID: u32 = 101;

/// Rectangle `[x0, x1] x [y0, y1]`, metres.
#[derive(Debug, Clone, Copy)]
struct Area {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

/// Stratified uniform placement: the area is cut into a `k x k` grid with
/// `k^2 >= n`, strata are visited in a seeded random order and each point is
/// uniform inside its stratum.
fn stratified(n: usize, area: Area, seed: u64) -> Vec<Position> {
    let mut rng = substream(seed, 0, Purpose::Placement, 0);
    let k = (n as f64).sqrt().ceil().max(1.0) as usize;
    let mut strata: Vec<usize> = (0..k * k).collect();
    strata.shuffle(&mut rng);
    let (w, h) = ((area.x1 - area.x0) / k as f64, (area.y1 - area.y0) / k as f64);
    strata
        .into_iter()
        .take(n)
        .map(|cell| {
            let (cx, cy) = ((cell % k) as f64, (cell / k) as f64);
            let x = area.x0 + (cx + rng.gen::<f64>()) * w;
            let y = area.y0 + (cy + rng.gen::<f64>()) * h;
            Position::new(x, y)
        })
        .collect()
}

fn ap(id: u32, x: f64, y: f64, channel: u8) -> NodeSpec {
    NodeSpec {
        id: NodeId(id),
        kind: NodeKind::MeshAp,
        position: Position::new(x, y),
        channel: Some(Channel(channel)),
        on_at: None,
        off_at: None,
    }
}

fn router(id: u32, x: f64, y: f64) -> NodeSpec {
    NodeSpec { kind: NodeKind::MeshRouter, channel: None, ..ap(id, x, y, 1) }
}

fn station(id: u32, p: Position, on_at: Option<u64>) -> NodeSpec {
    NodeSpec { id: NodeId(id), kind: NodeKind::Station, position: p, channel: None, on_at, off_at: None }
}

fn link(a: u32, b: u32) -> BackboneLink {
    BackboneLink { a: NodeId(a), b: NodeId(b), rate_mbps: 12.0 }
}

/// Four overlapping cells on distinct channels, one of them covering most of
/// the station area, with 65 stations switched on in stages of 5, 15, ..., 65.
/// Every station sends CBR traffic to the distribution system.
pub fn fourcell(seed: u64) -> Scenario {
    let mut sc = Scenario { seed, duration_us: 10_000_000, ..Scenario::default() };
    sc.nodes = vec![
        ap(1, 0.0, 0.0, 1),
        ap(2, 110.0, 0.0, 4),
        ap(3, 0.0, 110.0, 7),
        ap(4, 110.0, 110.0, 10),
    ];
    sc.backbone_links = vec![link(1, 2), link(2, 4), link(4, 3), link(3, 1)];
    let area = Area { x0: -40.0, y0: -40.0, x1: 70.0, y1: 70.0 };
    let total = *FOURCELL_STAGES.last().unwrap();
    for (i, p) in stratified(total, area, seed).into_iter().enumerate() {
        let stage = FOURCELL_STAGES.iter().position(|&s| i < s).unwrap() as u64;
        let on_at = (stage > 0).then_some(stage * FOURCELL_STAGE_US);
        let id = FIRST_STATION_ID + i as u32;
        sc.nodes.push(station(id, p, on_at));
        sc.traffic.push(TrafficSpec::cbr(Endpoint::Node(NodeId(id)), Endpoint::Sink, FOURCELL_CBR_KBPS));
    }
    sc
}

/// Gateway (node 1, the sink) behind two core routers, each serving three
/// APs over 12 Mb/s links.
fn mesh_backbone(sc: &mut Scenario) {
    sc.nodes.extend([router(1, 0.0, -150.0), router(2, -120.0, 0.0), router(3, 120.0, 0.0)]);
    sc.nodes.extend([
        ap(11, -180.0, 60.0, 1),
        ap(12, -60.0, 60.0, 3),
        ap(13, -120.0, 170.0, 5),
        ap(14, 60.0, 60.0, 7),
        ap(15, 180.0, 60.0, 9),
        ap(16, 120.0, 170.0, 11),
    ]);
    sc.backbone_links = vec![
        link(1, 2),
        link(1, 3),
        link(2, 11),
        link(2, 12),
        link(2, 13),
        link(3, 14),
        link(3, 15),
        link(3, 16),
    ];
    sc.sink_node = Some(NodeId(1));
}

const MESH_AREA: Area = Area { x0: -100.0, y0: 20.0, x1: 100.0, y1: 140.0 };

/// Mesh with 24 stations, each holding one voice session with the gateway.
pub fn mesh_voip(seed: u64) -> Scenario {
    let mut sc = Scenario { seed, duration_us: 10_000_000, ..Scenario::default() };
    mesh_backbone(&mut sc);
    for (i, p) in stratified(MESH_VOIP_SESSIONS, MESH_AREA, seed).into_iter().enumerate() {
        let id = FIRST_STATION_ID + i as u32;
        sc.nodes.push(station(id, p, None));
        sc.traffic.push(TrafficSpec::voip(Endpoint::Node(NodeId(id)), Endpoint::Sink));
    }
    sc
}

/// Mesh with 12 stations moving 500 KB files to (even) or from (odd) the
/// gateway.
pub fn mesh_ftp(seed: u64) -> Scenario {
    let mut sc = Scenario { seed, duration_us: 10_000_000, ..Scenario::default() };
    mesh_backbone(&mut sc);
    for (i, p) in stratified(MESH_FTP_STATIONS, MESH_AREA, seed).into_iter().enumerate() {
        let id = FIRST_STATION_ID + i as u32;
        sc.nodes.push(station(id, p, None));
        let me = Endpoint::Node(NodeId(id));
        let t = if i % 2 == 0 {
            TrafficSpec::ftp(me, Endpoint::Sink, MESH_FTP_FILE_KB)
        } else {
            TrafficSpec::ftp(Endpoint::Sink, me, MESH_FTP_FILE_KB)
        };
        sc.traffic.push(t);
    }
    sc
}

pub fn builtin_scenario_seeded(name: &str, seed: u64) -> Result<Scenario, ScenarioError> {
    let sc = match name {
        "fourcell" => fourcell(seed),
        "mesh_ftp" => mesh_ftp(seed),
        "mesh_voip" => mesh_voip(seed),
        _ => return Err(ScenarioError::UnknownScenario(name.to_string())),
    };
    sc.validate()?;
    Ok(sc)
}

pub fn builtin_scenario(name: &str) -> Result<Scenario, ScenarioError> {
    builtin_scenario_seeded(name, crate::scenario::DEFAULT_SEED)
}
