mod common;

use meshbal::scenario::{Endpoint, Scenario, TrafficSpec};
use meshbal::sim::{run, run_traced, Fate, MAX_RETRIES};
use meshbal::{builtin_scenario_seeded, NodeId};

use common::*;

/// Frame size 8192 bits at 11 Mb/s with the default overheads.
const AIRTIME_11M_US: u64 = 1444;

#[test]
fn lone_station_delivers_first_try_in_exactly_one_airtime() {
    let mut sc = one_cell(&[10.0]);
    sc.traffic.push(cbr_up(10, 1024.0, 700_000));
    let m = run(&sc).unwrap();
    let done: Vec<_> = m.frames.iter().filter(|f| f.fate.is_some()).collect();
    assert!(done.len() > 100);
    for f in done {
        assert_eq!(f.fate, Some(Fate::Delivered));
        assert_eq!(f.retries, 0);
        assert_eq!(f.fate_us.unwrap() - f.created_us, AIRTIME_11M_US);
    }
    assert_eq!(m.delivery_ratio(), 1.0 - m.inflight_bits as f64 / m.generated_bits as f64);
}

#[test]
fn lossy_link_gives_up_after_eight_attempts() {
    let mut sc = one_cell(&[159.0]);
    sc.channel.base_error = 0.9;
    sc.traffic.push(cbr_up(10, 64.0, 700_000));
    let m = run(&sc).unwrap();
    let dropped: Vec<_> = m.frames.iter().filter(|f| f.fate == Some(Fate::DroppedError)).collect();
    assert!(!dropped.is_empty());
    assert!(dropped.iter().all(|f| f.retries == MAX_RETRIES + 1));
    assert!(m.frames.iter().all(|f| f.retries <= MAX_RETRIES + 1));
    assert!(m.frames.iter().filter(|f| f.fate == Some(Fate::Delivered)).all(|f| f.retries <= MAX_RETRIES));
    assert!(m.conservation.iter().all(|c| c.holds()));
}

/// Two stations whose file transfers start at the same instant, so both
/// contend for the first slot.
fn simultaneous_pair(seed: u64) -> Scenario {
    let mut sc = one_cell(&[10.0, -10.0]);
    sc.seed = seed;
    sc.duration_us = 800_000;
    for id in [10, 11] {
        let mut t = TrafficSpec::ftp(Endpoint::Node(NodeId(id)), Endpoint::Sink, 1.0);
        t.start_us = 700_000;
        sc.traffic.push(t);
    }
    sc
}

#[test]
fn tied_slot_makes_both_frames_retry() {
    let mut found = 0;
    for seed in 1..400 {
        let sc = simultaneous_pair(seed);
        let mut trace = Vec::new();
        let m = run_traced(&sc, Some(&mut trace)).unwrap();
        let text = String::from_utf8(trace).unwrap();
        let first_tx = text
            .lines()
            .map(|l| l.split('\t').collect::<Vec<_>>())
            .find(|f| f[2] == "FrameTx" && f[4] != "idle" && f[4] != "busy")
            .unwrap();
        if !first_tx[4].starts_with("collision n=2") {
            continue;
        }
        let first = |src: u32| {
            m.frames.iter().find(|f| f.src == Endpoint::Node(NodeId(src))).unwrap()
        };
        let (a, b) = (first(10), first(11));
        assert!(a.retries >= 1 && b.retries >= 1, "seed {seed}: {a:?} {b:?}");
        if a.retries == 1 && b.retries == 1 {
            found += 1;
        }
    }
    assert!(found > 0, "no seed produced a single collision on the first slot");
}

#[test]
fn contention_never_overlaps_successes() {
    let mut sc = one_cell(&[10.0, 30.0, 60.0, 100.0, 140.0]);
    for id in 10..15 {
        sc.traffic.push(cbr_up(id, 1024.0, 700_000));
    }
    let m = run(&sc).unwrap();
    assert_eq!(m.medium_overlaps, 0);
    assert!(m.frames_with(Fate::DroppedRetry) + m.frames_with(Fate::DroppedOverflow) > 0);
    assert!(m.conservation.iter().all(|c| c.holds()));
}

#[test]
fn cbr_interval_follows_rate() {
    let mut sc = one_cell(&[10.0]);
    sc.traffic.push(cbr_up(10, 1024.0, 700_000));
    let m = run(&sc).unwrap();
    let created: Vec<u64> = m.frames.iter().map(|f| f.created_us).collect();
    for w in created.windows(2) {
        assert_eq!(w[1] - w[0], 8_000);
    }
}

#[test]
fn voip_session_is_fifty_frames_per_second_each_way() {
    let mut sc = builtin_scenario_seeded("mesh_voip", 1).unwrap().with_voip_sessions(1);
    sc.duration_us = 2_000_000;
    let m = run(&sc).unwrap();
    let station = Endpoint::Node(NodeId(101));
    let up = m.frames.iter().filter(|f| f.src == station).count();
    let down = m.frames.iter().filter(|f| f.dst == station).count();
    assert_eq!(up, 100);
    assert_eq!(up, down);
    assert!(m.frames.iter().all(|f| f.size_bits == 1280));
}

#[test]
fn ftp_file_is_five_hundred_frames() {
    let mut sc = one_cell(&[10.0]);
    sc.duration_us = 10_000_000;
    let mut t = TrafficSpec::ftp(Endpoint::Node(NodeId(10)), Endpoint::Sink, 500.0);
    t.start_us = 700_000;
    sc.traffic.push(t);
    let m = run(&sc).unwrap();
    // One file takes well under the run; the closed loop keeps going.
    assert!(m.frames.len() > 500);
    let first_file_done = m.frames[499].fate_us.unwrap();
    assert!(m.frames[500].created_us >= first_file_done);
}

#[test]
fn displaced_station_rejoins_and_is_counted_as_handoff() {
    let mut sc = one_cell(&[20.0]);
    sc.nodes.push(ap(2, 60.0, 0.0, 6));
    sc.nodes[0].off_at = Some(1_000_000);
    sc.backbone_links = vec![meshbal::scenario::BackboneLink { a: NodeId(1), b: NodeId(2), rate_mbps: 12.0 }];
    sc.traffic.push(cbr_up(10, 64.0, 700_000));
    sc.policy.apply_label("rssi").unwrap();
    let m = run(&sc).unwrap();
    assert_eq!(m.joins, 1);
    assert_eq!(m.handoffs, 1);
    assert_eq!(m.handoff_delays_us, vec![610_000]);
    assert!(m.frames_with(Fate::Delivered) > 0);
    assert!(m.conservation.iter().all(|c| c.holds()));
}

#[test]
fn late_station_joins_when_switched_on() {
    for (label, join_delay) in [("airtime", 610_000), ("airtime+coop", 10_000)] {
        let mut sc = one_cell(&[10.0, 15.0]);
        sc.policy.apply_label(label).unwrap();
        sc.nodes[2].on_at = Some(1_000_000);
        sc.traffic.push(cbr_up(11, 64.0, 0));
        let m = run(&sc).unwrap();
        // The neighbor's table spares the newcomer its scan.
        assert_eq!(m.join_delays_us, vec![610_000, join_delay]);
        let first = m.frames.iter().filter_map(|f| f.delivered_us()).min().unwrap();
        assert!(first >= 1_000_000 + join_delay);
    }
}

#[test]
fn idle_network_samples_are_balanced() {
    let sc = one_cell(&[10.0]);
    let m = run(&sc).unwrap();
    assert_eq!(m.generated_bits, 0);
    assert!(m.balance_series.iter().all(|&(_, b)| b == 1.0));
    assert_eq!(m.mean_balance_index, 1.0);
}

#[test]
fn seeds_change_outcomes_but_reruns_do_not() {
    let a = run(&builtin_scenario_seeded("mesh_ftp", 1).unwrap()).unwrap();
    let b = run(&builtin_scenario_seeded("mesh_ftp", 1).unwrap()).unwrap();
    let c = run(&builtin_scenario_seeded("mesh_ftp", 2).unwrap()).unwrap();
    assert_eq!(a.trace_hash, b.trace_hash);
    assert_eq!(a.throughput_bps, b.throughput_bps);
    assert_ne!(a.trace_hash, c.trace_hash);
    assert!(a.conservation.iter().all(|s| s.holds()));
}

#[test]
fn mesh_ftp_moves_data_both_ways() {
    let m = run(&builtin_scenario_seeded("mesh_ftp", 4).unwrap()).unwrap();
    let up = m.frames.iter().filter(|f| f.dst == Endpoint::Sink && f.fate == Some(Fate::Delivered)).count();
    let down = m.frames.iter().filter(|f| f.src == Endpoint::Sink && f.fate == Some(Fate::Delivered)).count();
    assert!(up > 0 && down > 0, "up {up} down {down}");
    assert!(m.frames.iter().filter(|f| f.fate == Some(Fate::Delivered)).all(|f| f.backbone_hops >= 2));
}
