//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use meshbal::airtime::{downlink_load, station_airtime, total_cost, uplink_load, AirtimeParams, StationLinkSample};
use meshbal::association::{decide_airtime, decide_crosslayer, decide_rssi, AssocCause};
use meshbal::balancer::balancing_index;
use meshbal::report::{rows_to_csv, BaseScenario, SweepSpec};
use meshbal::routing::{shortest_paths, BackboneGraph};
use meshbal::scenario::{parse_scenario, BackboneLink, Scenario};
use meshbal::sim::{run, run_traced, RunMetrics};
use meshbal::{builtin_scenario_seeded, NodeId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use common::*;

const FORMULA_REL_TOL: f64 = 1e-12;
const FORMULA_CASES: usize = 10_000;
const ROUTING_GRAPHS: usize = 500;
const DECIDER_SETS: usize = 10_000;
const SEEDS: u64 = 5;
const SATURATION_RATIO: f64 = 1.05;
const MIN_GAIN: f64 = 1.20;
const FOURCELL_CHECKED: [usize; 3] = [45, 55, 65];
const E2E_BUDGET_US: f64 = 150_000.0;
const VOIP_COUNTS: [usize; 16] = [2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24, 26, 28, 30, 32];
const MIN_B_GAP: f64 = 0.05;

const SKEWED: &str = include_str!("../scenarios/skewed.scn");

static RUNS: AtomicU64 = AtomicU64::new(0);
static SAMPLES: AtomicU64 = AtomicU64::new(0);
static VIOLATIONS: AtomicU64 = AtomicU64::new(0);

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

/// Runs a scenario and books its conservation samples for the last
/// criterion.
fn checked_run(sc: &Scenario) -> RunMetrics {
    let m = run(sc).expect("acceptance scenario runs");
    book(&m);
    m
}

fn book(m: &RunMetrics) {
    RUNS.fetch_add(1, Ordering::Relaxed);
    SAMPLES.fetch_add(m.conservation.len() as u64, Ordering::Relaxed);
    let bad = m.conservation.iter().filter(|c| !c.holds()).count() as u64 + m.medium_overlaps;
    VIOLATIONS.fetch_add(bad, Ordering::Relaxed);
}

fn within(t: Instant, limit: Duration) -> bool {
    t.elapsed() < limit
}

fn formulas() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let p = AirtimeParams::<f64>::dot11b();
    let anchor = station_airtime(&p, StationLinkSample::new(1.0, 0.0)).unwrap();
    let b_even = balancing_index(&[7.5, 7.5]).unwrap();
    let b_half = balancing_index(&[7.5, 0.0]).unwrap();
    for _ in 0..FORMULA_CASES {
        let (o_ca, o_p, b_t) = (rng.gen_range(1.0..1000.0), rng.gen_range(1.0..1000.0), rng.gen_range(100.0..20000.0));
        let params = AirtimeParams::new(o_ca, o_p, b_t).unwrap();
        let r = rng.gen_range(0.5..54.0);
        let e = rng.gen_range(0.0..0.95);
        let got = station_airtime(&params, StationLinkSample::new(r, e)).unwrap();
        worst = worst.max(rel_err(got, oracle_station_airtime(o_ca, o_p, b_t, r, e)));

        let n = rng.gen_range(0..12);
        let links: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen_range(0.5..54.0), rng.gen_range(0.0..0.9))).collect();
        let rates: Vec<f64> = links.iter().map(|l| l.0).collect();
        let hm = if n == 0 { 1.0 } else { n as f64 / rates.iter().map(|r| 1.0 / r).sum::<f64>() };
        let up = uplink_load(&params, hm, e, n).unwrap();
        worst = worst.max(rel_err(up, oracle_uplink(o_ca, o_p, b_t, &rates, e)));
        let samples: Vec<_> = links.iter().map(|&(r, e)| StationLinkSample::new(r, e)).collect();
        let down = downlink_load(&params, &samples).unwrap();
        worst = worst.max(rel_err(down, oracle_downlink(o_ca, o_p, b_t, &links)));

        let w1: f64 = rng.gen_range(0.0..=1.0);
        let w2 = 1.0 - w1;
        let rc = rng.gen_range(0.0..1e5);
        let tc = total_cost(up, down, rc, w1, w2).unwrap();
        worst = worst.max(rel_err(tc, oracle_total_cost(up, down, rc, w1, w2)));

        let k = rng.gen_range(1..=8);
        let ac: Vec<f64> = (0..k).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1e5) }).collect();
        worst = worst.max(rel_err(balancing_index(&ac).unwrap(), oracle_balance(&ac)));
    }
    let anchors = anchor == 8923.0 && b_even == 1.0 && b_half == 0.5;
    let fast = within(t, Duration::from_secs(1));
    verdict(
        worst <= FORMULA_REL_TOL && anchors && fast,
        format!("max rel err {worst:.2e}, anchors {anchors}, {FORMULA_CASES} cases"),
    )
}

fn balance_bounds() -> Verdict {
    use num_rational::Ratio;
    type Q = Ratio<i64>;
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut failures = 0;
    for _ in 0..FORMULA_CASES {
        let n = rng.gen_range(1..=6);
        let v: Vec<Q> = (0..n).map(|_| Q::from_integer(if rng.gen_bool(0.25) { 0 } else { rng.gen_range(0..1000) })).collect();
        let b = balancing_index(&v).unwrap();
        let lower = Q::new(1, n as i64);
        let nonzero = v.iter().filter(|x| **x != Q::from_integer(0)).count();
        let all_equal = v.iter().all(|x| *x == v[0]);
        let ok_bounds = lower <= b && b <= Q::from_integer(1);
        let ok_upper_eq = (b == Q::from_integer(1)) == (all_equal || nonzero == 0);
        let ok_lower_eq = n == 1 || ((b == lower) == (nonzero == 1));
        let k = Q::new(rng.gen_range(1..100), rng.gen_range(1..100));
        let scaled: Vec<Q> = v.iter().map(|x| *x * k).collect();
        let mut perm = v.clone();
        perm.reverse();
        perm.rotate_left(rng.gen_range(0..n));
        let ok_inv = balancing_index(&scaled).unwrap() == b && balancing_index(&perm).unwrap() == b;
        if !(ok_bounds && ok_upper_eq && ok_lower_eq && ok_inv) {
            failures += 1;
        }
    }
    let fast = within(t, Duration::from_secs(1));
    verdict(failures == 0 && fast, format!("{failures} failing vectors of {FORMULA_CASES}, exact rationals"))
}

fn routing() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut mismatches = 0;
    let mut pairs = 0;
    for _ in 0..ROUTING_GRAPHS {
        let (vs, edges) = random_graph(&mut rng, 8);
        let g = BackboneGraph::new(vs.clone(), &edges).unwrap();
        for &recv in &vs {
            let routes = shortest_paths(&g, recv).unwrap();
            for &src in &vs {
                pairs += 1;
                let e = &routes[&src];
                let ok = if src == recv {
                    e.cost_us == 0.0 && e.path.is_empty() && e.next_hop.is_none()
                } else {
                    let (c, p) = brute_force_route(&edges, src, recv).unwrap();
                    e.cost_us == c && e.path == p && e.next_hop == Some(p[1])
                };
                if !ok {
                    mismatches += 1;
                }
            }
        }
    }
    let fast = within(t, Duration::from_secs(10));
    verdict(mismatches == 0 && fast, format!("{mismatches} mismatches over {pairs} pairs in {ROUTING_GRAPHS} graphs"))
}

fn deciders() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut mismatches = 0;
    let mut ties = 0;
    let weights = [(0.5, 0.5), (0.25, 0.75), (0.75, 0.25), (1.0, 0.0), (0.0, 1.0)];
    for _ in 0..DECIDER_SETS {
        let c = random_candidates(&mut rng, 10);
        let (w1, w2) = weights[rng.gen_range(0..weights.len())];
        let ac = |x: &meshbal::CandidateApF64| x.uplink_cost_us.unwrap() + x.downlink_cost_us.unwrap();
        let want_rssi = brute_force_best(&c, |x| x.rssi_dbm, true);
        let want_air = brute_force_best(&c, ac, false);
        let want_cl = brute_force_best(&c, |x| w1 * ac(x) + w2 * x.route_cost_us.unwrap(), false);
        let air_scores: Vec<f64> = c.iter().map(ac).collect();
        if air_scores.iter().filter(|s| **s == air_scores.iter().copied().fold(f64::INFINITY, f64::min)).count() > 1 {
            ties += 1;
        }
        let cause = AssocCause::InitialJoin;
        if decide_rssi(&c, cause).unwrap().chosen_ap != want_rssi
            || decide_airtime(&c, cause).unwrap().chosen_ap != want_air
            || decide_crosslayer(&c, w1, w2, cause).unwrap().chosen_ap != want_cl
        {
            mismatches += 1;
        }
    }
    let fast = within(t, Duration::from_secs(5));
    verdict(mismatches == 0 && fast, format!("{mismatches} mismatches in {DECIDER_SETS} sets ({ties} with tied minima)"))
}

/// Two APs on different channels. The station next to AP 1 loses it at
/// 3 s and moves to AP 2, which its neighbor has been advertising.
fn two_ap(label: &str) -> Scenario {
    let mut sc = Scenario { duration_us: 5_000_000, ..Scenario::default() };
    let mut a1 = ap(1, 0.0, 0.0, 1);
    a1.off_at = Some(3_000_000);
    sc.nodes = vec![a1, ap(2, 100.0, 0.0, 6), sta(10, 20.0, 0.0), sta(11, 80.0, 0.0)];
    sc.backbone_links = vec![BackboneLink { a: NodeId(1), b: NodeId(2), rate_mbps: 12.0 }];
    sc.traffic = vec![cbr_up(10, 64.0, 700_000), cbr_up(11, 64.0, 700_000)];
    sc.policy.apply_label(label).unwrap();
    sc.validate().unwrap();
    sc
}

fn handoff_delay() -> Verdict {
    let with = checked_run(&two_ap("airtime+coop"));
    let without = checked_run(&two_ap("airtime"));
    let h = two_ap("airtime").policy.handoff;
    let tail = h.auth_delay_us + h.reassoc_delay_us;
    let scan = h.n_channels * h.per_channel_dwell_us;
    let pass = with.handoff_delays_us == vec![tail] && without.handoff_delays_us == vec![scan + tail];
    verdict(
        pass,
        format!("coop {:?} (want [{tail}]), no coop {:?} (want [{}])", with.handoff_delays_us, without.handoff_delays_us, scan + tail),
    )
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn fourcell() -> Verdict {
    let t = Instant::now();
    let jobs: Vec<(usize, &str, u64)> = FOURCELL_CHECKED
        .iter()
        .flat_map(|&n| ["rssi", "airtime+coop"].into_iter().flat_map(move |p| (1..=SEEDS).map(move |s| (n, p, s))))
        .collect();
    let thr: Vec<((usize, &str), f64)> = jobs
        .par_iter()
        .map(|&(n, p, s)| {
            let mut sc = builtin_scenario_seeded("fourcell", s).unwrap().with_num_stations(n);
            sc.policy.apply_label(p).unwrap();
            ((n, p), checked_run(&sc).throughput_bps)
        })
        .collect();
    let mut by: BTreeMap<(usize, &str), Vec<f64>> = BTreeMap::new();
    for (k, v) in thr {
        by.entry(k).or_default().push(v);
    }
    let m = |n: usize, p: &'static str| mean(by[&(n, p)].iter().copied());
    let saturation = m(65, "rssi") / m(45, "rssi");
    let gains: Vec<f64> = FOURCELL_CHECKED.iter().map(|&n| m(n, "airtime+coop") / m(n, "rssi")).collect();
    let pass = saturation <= SATURATION_RATIO
        && gains.iter().all(|g| *g >= MIN_GAIN)
        && within(t, Duration::from_secs(120));
    let gains_txt: Vec<String> = FOURCELL_CHECKED.iter().zip(&gains).map(|(n, g)| format!("{n}:{g:.2}")).collect();
    verdict(
        pass,
        format!(
            "rssi 65/45 = {saturation:.3} (<= {SATURATION_RATIO}), airtime+coop/rssi {} (>= {MIN_GAIN}), {SEEDS} seeds",
            gains_txt.join(" ")
        ),
    )
}

/// Largest session count whose seed-averaged e2e delay is under budget.
fn max_sessions(policy: &str) -> usize {
    let jobs: Vec<(usize, u64)> = VOIP_COUNTS.iter().flat_map(|&n| (1..=SEEDS).map(move |s| (n, s))).collect();
    let delays: Vec<(usize, f64)> = jobs
        .par_iter()
        .map(|&(n, s)| {
            let mut sc = builtin_scenario_seeded("mesh_voip", s).unwrap().with_voip_sessions(n);
            sc.policy.apply_label(policy).unwrap();
            (n, checked_run(&sc).avg_e2e_delay_us)
        })
        .collect();
    let mut by: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (n, d) in delays {
        by.entry(n).or_default().push(d);
    }
    by.iter().filter(|(_, d)| mean(d.iter().copied()) < E2E_BUDGET_US).map(|(n, _)| *n).max().unwrap_or(0)
}

fn skewed_b(label: &str) -> f64 {
    let base = parse_scenario(SKEWED).unwrap();
    let bs: Vec<f64> = (1..=SEEDS)
        .into_par_iter()
        .map(|s| {
            let mut sc = Scenario { seed: s, ..base.clone() };
            sc.policy.apply_label(label).unwrap();
            checked_run(&sc).mean_balance_index
        })
        .collect();
    mean(bs.into_iter())
}

fn load_balancing() -> Verdict {
    let t = Instant::now();
    let lb = max_sessions("lb+coop");
    let rssi = max_sessions("rssi");
    let b_on = skewed_b("lb");
    let b_off = skewed_b("crosslayer");
    let pass = lb > rssi && b_on - b_off >= MIN_B_GAP && within(t, Duration::from_secs(300));
    let cap = |n: usize| if n == *VOIP_COUNTS.last().unwrap() { format!(">={n}") } else { n.to_string() };
    verdict(
        pass,
        format!(
            "sessions under {:.0} ms: lb+coop {} vs rssi {}; skewed b {b_on:.3} vs {b_off:.3} (gap >= {MIN_B_GAP})",
            E2E_BUDGET_US / 1000.0,
            cap(lb),
            cap(rssi)
        ),
    )
}

fn weights() -> Verdict {
    let mut runs: Vec<Scenario> = Vec::new();
    let skewed = parse_scenario(SKEWED).unwrap();
    for s in 1..=3 {
        let mut a = Scenario { seed: s, ..skewed.clone() };
        a.policy.apply_label("lb").unwrap();
        runs.push(a);
        let mut b = builtin_scenario_seeded("mesh_voip", s).unwrap();
        b.policy.apply_label("lb+coop").unwrap();
        runs.push(b);
        let mut c = builtin_scenario_seeded("fourcell", s).unwrap();
        c.policy.apply_label("lb+coop").unwrap();
        runs.push(c);
    }
    let results: Vec<(usize, usize, usize)> = runs
        .par_iter()
        .map(|sc| {
            let m = checked_run(sc);
            let p = &sc.policy;
            let mut bad = 0;
            let mut rises = 0;
            let mut last: BTreeMap<NodeId, (f64, bool)> = BTreeMap::new();
            for w in &m.weight_samples {
                if w.w1 + w.w2 != 1.0 || w.w1 < p.w1_init || w.w1 > p.w1_max {
                    bad += 1;
                }
                let (prev, all_below) = last.get(&w.station).copied().unwrap_or((p.w1_init, true));
                let all_below = all_below && w.heard_b < p.balance_threshold_t;
                if w.w1_before != prev || (all_below && w.w1 < w.w1_before) {
                    bad += 1;
                }
                if w.w1 > w.w1_before {
                    rises += 1;
                }
                last.insert(w.station, (w.w1, all_below));
            }
            (m.weight_samples.len(), bad, rises)
        })
        .collect();
    let samples: usize = results.iter().map(|r| r.0).sum();
    let bad: usize = results.iter().map(|r| r.1).sum();
    let rises: usize = results.iter().map(|r| r.2).sum();
    verdict(
        bad == 0 && samples > 0 && rises > 0,
        format!("{samples} samples over {} runs, {rises} increases, {bad} violations", runs.len()),
    )
}

fn determinism() -> Verdict {
    let spec = SweepSpec {
        variable: Some(meshbal::report::SweepVar::NumStations),
        values: vec!["15".into(), "45".into()],
        policies: vec!["rssi".into(), "lb+coop".into()],
        repetitions: 2,
        base_seed: 7,
        base: BaseScenario::Builtin("fourcell".into()),
    };
    let csv_a = rows_to_csv(&spec.execute().unwrap()).unwrap();
    let csv_b = rows_to_csv(&spec.execute().unwrap()).unwrap();
    let mut sc = builtin_scenario_seeded("mesh_voip", 3).unwrap();
    sc.policy.apply_label("lb+coop").unwrap();
    let (mut ta, mut tb) = (Vec::new(), Vec::new());
    let ma = run_traced(&sc, Some(&mut ta)).unwrap();
    let mb = run_traced(&sc, Some(&mut tb)).unwrap();
    book(&ma);
    book(&mb);
    let same_csv = csv_a == csv_b;
    let same_trace = ta == tb && ma.trace_hash == mb.trace_hash && !ta.is_empty();
    let (runs, samples, violations) =
        (RUNS.load(Ordering::Relaxed), SAMPLES.load(Ordering::Relaxed), VIOLATIONS.load(Ordering::Relaxed));
    verdict(
        same_csv && same_trace && violations == 0 && samples > 0,
        format!(
            "csv identical {same_csv}, trace identical {same_trace} ({}...), conservation: {violations} violations in {samples} samples over {runs} runs",
            &ma.trace_hash[..12]
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("formula oracles", formulas),
        ("balancing index bounds", balance_bounds),
        ("routing oracle", routing),
        ("decision oracles", deciders),
        ("handoff delay", handoff_delay),
        ("fourcell throughput", fourcell),
        ("voip load balancing", load_balancing),
        ("weight heuristic", weights),
        ("determinism and conservation", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let v = f();
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {} {name}: {} ({}; {:.2} s)",
            i + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
