//! Experiment batches and their CSV / text reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::builtin::builtin_scenario_seeded;
use crate::scenario::{Scenario, ScenarioError};
use crate::sim::{run_traced, SimError};

pub const CSV_COLUMNS: [&str; 12] = [
    "sweep_var",
    "sweep_value",
    "policy",
    "seed",
    "throughput_bps",
    "avg_tx_delay_us",
    "client_access_delay_us",
    "ap_access_delay_us",
    "e2e_delay_us",
    "dropped_bits",
    "handoffs",
    "mean_balance_index",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no rows to report")]
    EmptyReport,
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{label}: {source}")]
    Run { label: String, source: SimError },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVar {
    NumStations,
    FileSizeKb,
    VoipSessions,
    NumAps,
    Policy,
}

impl SweepVar {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVar::NumStations => "num_stations",
            SweepVar::FileSizeKb => "file_size_kb",
            SweepVar::VoipSessions => "voip_sessions",
            SweepVar::NumAps => "num_aps",
            SweepVar::Policy => "policy",
        }
    }
}

impl FromStr for SweepVar {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "num_stations" => Ok(SweepVar::NumStations),
            "file_size_kb" => Ok(SweepVar::FileSizeKb),
            "voip_sessions" => Ok(SweepVar::VoipSessions),
            "num_aps" => Ok(SweepVar::NumAps),
            "policy" => Ok(SweepVar::Policy),
            _ => Err(format!(
                "unknown sweep variable {s:?} (num_stations, file_size_kb, voip_sessions, num_aps, policy)"
            )),
        }
    }
}

/// Where each run's scenario comes from. Builtins are regenerated per seed
/// so placement varies across repetitions.
#[derive(Debug, Clone, PartialEq)]
pub enum BaseScenario {
    File(Box<Scenario>),
    Builtin(String),
}

impl BaseScenario {
    pub fn instantiate(&self, seed: u64) -> Result<Scenario, ScenarioError> {
        match self {
            BaseScenario::File(sc) => Ok(Scenario { seed, ..(**sc).clone() }),
            BaseScenario::Builtin(name) => builtin_scenario_seeded(name, seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// `None` for a plain run.
    pub variable: Option<SweepVar>,
    pub values: Vec<String>,
    /// Policy labels; empty keeps the scenario's own policy.
    pub policies: Vec<String>,
    pub repetitions: usize,
    pub base_seed: u64,
    pub base: BaseScenario,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub sweep_var: String,
    pub sweep_value: String,
    /// Position of `sweep_value` in the sweep, used for ordering.
    pub value_rank: usize,
    pub policy: String,
    pub seed: u64,
    pub throughput_bps: f64,
    pub avg_tx_delay_us: f64,
    pub client_access_delay_us: f64,
    pub ap_access_delay_us: f64,
    pub e2e_delay_us: f64,
    pub dropped_bits: u64,
    pub handoffs: u64,
    pub mean_balance_index: f64,
}

fn parse_num<T: FromStr>(var: SweepVar, v: &str) -> Result<T, ScenarioError> {
    v.parse().map_err(|_| ScenarioError::Validation {
        field: var.as_str().into(),
        message: format!("bad sweep value {v:?}"),
    })
}

/// Applies one sweep value to a scenario.
pub fn apply_sweep(sc: &Scenario, var: SweepVar, value: &str) -> Result<Scenario, ScenarioError> {
    let out = match var {
        SweepVar::NumStations => sc.with_num_stations(parse_num(var, value)?),
        SweepVar::VoipSessions => sc.with_voip_sessions(parse_num(var, value)?),
        SweepVar::FileSizeKb => sc.with_file_size_kb(parse_num(var, value)?),
        SweepVar::NumAps => sc.with_num_aps(parse_num(var, value)?),
        SweepVar::Policy => {
            let mut s = sc.clone();
            s.policy.apply_label(value)?;
            s
        }
    };
    out.validate()?;
    Ok(out)
}

struct Job {
    rank: usize,
    value: String,
    policy: Option<String>,
    seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| ScenarioError::Validation { field: "sweep".into(), message: m.into() };
        if self.variable.is_some() && self.values.is_empty() {
            return Err(bad("values must be non-empty"));
        }
        if self.repetitions == 0 {
            return Err(bad("repetitions must be at least 1"));
        }
        let mut probe = crate::scenario::PolicySpec::default();
        for p in &self.policies {
            probe.apply_label(p)?;
        }
        Ok(())
    }

    fn jobs(&self) -> Vec<Job> {
        let values: Vec<String> = match self.variable {
            Some(_) => self.values.clone(),
            None => vec!["-".into()],
        };
        let policies: Vec<Option<String>> = if self.policies.is_empty() {
            vec![None]
        } else {
            self.policies.iter().cloned().map(Some).collect()
        };
        let mut jobs = Vec::new();
        for (rank, v) in values.iter().enumerate() {
            for p in &policies {
                for r in 0..self.repetitions {
                    jobs.push(Job {
                        rank,
                        value: v.clone(),
                        policy: p.clone(),
                        seed: self.base_seed.wrapping_add(r as u64),
                    });
                }
            }
        }
        jobs
    }

    /// Scenario of one job, with the sweep value and policy applied.
    pub fn scenario_for(&self, value: &str, policy: Option<&str>, seed: u64) -> Result<Scenario, ScenarioError> {
        let mut sc = self.base.instantiate(seed)?;
        if let Some(var) = self.variable {
            sc = apply_sweep(&sc, var, value)?;
        }
        if let Some(p) = policy {
            sc.policy.apply_label(p)?;
        }
        sc.validate()?;
        Ok(sc)
    }

    fn run_job(&self, job: &Job, trace: Option<&mut dyn Write>) -> Result<ReportRow, ReportError> {
        let var = self.variable.map_or("none", SweepVar::as_str);
        let sc = self.scenario_for(&job.value, job.policy.as_deref(), job.seed)?;
        let policy = sc.policy.label();
        let m = run_traced(&sc, trace).map_err(|source| ReportError::Run {
            label: format!("{var}={} policy={policy} seed={}", job.value, job.seed),
            source,
        })?;
        Ok(ReportRow {
            sweep_var: var.into(),
            sweep_value: job.value.clone(),
            value_rank: job.rank,
            policy,
            seed: job.seed,
            throughput_bps: m.throughput_bps,
            avg_tx_delay_us: m.avg_tx_delay_us,
            client_access_delay_us: m.avg_client_access_delay_us,
            ap_access_delay_us: m.avg_ap_access_delay_us,
            e2e_delay_us: m.avg_e2e_delay_us,
            dropped_bits: m.dropped_bits,
            handoffs: m.handoffs,
            mean_balance_index: m.mean_balance_index,
        })
    }

    pub fn job_count(&self) -> usize {
        self.jobs().len()
    }

    /// Runs every (value, policy, repetition) in parallel. Rows come back
    /// sorted by value, policy and seed; the first failing job in that
    /// order determines the error.
    pub fn execute(&self) -> Result<Vec<ReportRow>, ReportError> {
        self.validate()?;
        let results: Vec<Result<ReportRow, ReportError>> =
            self.jobs().par_iter().map(|job| self.run_job(job, None)).collect();
        let mut rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        sort_rows(&mut rows);
        Ok(rows)
    }

    /// Single-run variant that streams the event trace.
    pub fn execute_traced(&self, trace: &mut dyn Write) -> Result<ReportRow, ReportError> {
        self.validate()?;
        let jobs = self.jobs();
        if jobs.len() != 1 {
            return Err(ReportError::Validation(format!("a trace needs exactly one run, got {}", jobs.len())));
        }
        self.run_job(&jobs[0], Some(trace))
    }
}

pub fn sort_rows(rows: &mut [ReportRow]) {
    rows.sort_by(|a, b| {
        (a.value_rank, &a.policy, a.seed).cmp(&(b.value_rank, &b.policy, b.seed))
    });
}

pub fn rows_to_csv(rows: &[ReportRow]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.sweep_var.clone(),
            r.sweep_value.clone(),
            r.policy.clone(),
            r.seed.to_string(),
            r.throughput_bps.to_string(),
            r.avg_tx_delay_us.to_string(),
            r.client_access_delay_us.to_string(),
            r.ap_access_delay_us.to_string(),
            r.e2e_delay_us.to_string(),
            r.dropped_bits.to_string(),
            r.handoffs.to_string(),
            r.mean_balance_index.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

/// Means of one (value, policy) group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub sweep_value: String,
    pub policy: String,
    pub count: usize,
    pub throughput_bps: f64,
    pub e2e_delay_us: f64,
    pub dropped_bits: f64,
    pub handoffs: f64,
    pub mean_balance_index: f64,
    /// Throughput gain over the baseline policy at the same value, percent.
    pub improvement_pct: Option<f64>,
}

pub fn summarize(rows: &[ReportRow], baseline: &str) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<(usize, String), Vec<&ReportRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.value_rank, r.policy.clone())).or_default().push(r);
    }
    let mean = |g: &[&ReportRow], f: fn(&ReportRow) -> f64| g.iter().map(|r| f(r)).sum::<f64>() / g.len() as f64;
    let mut out: Vec<GroupSummary> = groups
        .iter()
        .map(|((_, policy), g)| GroupSummary {
            sweep_value: g[0].sweep_value.clone(),
            policy: policy.clone(),
            count: g.len(),
            throughput_bps: mean(g, |r| r.throughput_bps),
            e2e_delay_us: mean(g, |r| r.e2e_delay_us),
            dropped_bits: mean(g, |r| r.dropped_bits as f64),
            handoffs: mean(g, |r| r.handoffs as f64),
            mean_balance_index: mean(g, |r| r.mean_balance_index),
            improvement_pct: None,
        })
        .collect();
    let base: BTreeMap<String, f64> = out
        .iter()
        .filter(|g| g.policy == baseline)
        .map(|g| (g.sweep_value.clone(), g.throughput_bps))
        .collect();
    for g in out.iter_mut().filter(|g| g.policy != baseline) {
        if let Some(&b) = base.get(&g.sweep_value) {
            if b > 0.0 {
                g.improvement_pct = Some((g.throughput_bps - b) / b * 100.0);
            }
        }
    }
    out
}

/// CSV text and a human-readable summary of the rows.
pub fn emit_report(rows: &[ReportRow], baseline: &str) -> Result<(String, String), ReportError> {
    if rows.is_empty() {
        return Err(ReportError::EmptyReport);
    }
    let csv = rows_to_csv(rows)?;
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:<10} {:<16} {:>3} {:>14} {:>12} {:>12} {:>9} {:>7} {:>10}",
        rows[0].sweep_var, "policy", "n", "throughput_bps", "e2e_ms", "dropped_kb", "handoffs", "b", "vs_".to_string() + baseline
    );
    for g in summarize(rows, baseline) {
        let imp = g.improvement_pct.map(|p| format!("{p:+.1}%")).unwrap_or_default();
        let _ = writeln!(
            text,
            "{:<10} {:<16} {:>3} {:>14.0} {:>12.2} {:>12.1} {:>9.1} {:>7.4} {:>10}",
            g.sweep_value,
            g.policy,
            g.count,
            g.throughput_bps,
            g.e2e_delay_us / 1000.0,
            g.dropped_bits / 1000.0,
            g.handoffs,
            g.mean_balance_index,
            imp
        );
    }
    Ok((csv, text))
}

/// Writes `contents` next to `path` and renames it into place, so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}
