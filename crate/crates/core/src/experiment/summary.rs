//! Per-cell summary rows and the scheme × persona × condition × N pivot.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::metrics::{
    amdahl_bound, efficiency_gap, mean, median, overhead_counts, round_straggler_gaps, speedup, token_multiplier,
    StragglerMode,
};
use crate::orchestrator::RunRecord;
use crate::workspace::ConflictKind;

/// One condition cell. Absent values serialize as empty CSV fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub benchmark: String,
    pub condition: String,
    pub p: f64,
    pub scheme: String,
    pub persona: String,
    pub n_agents: usize,
    pub runs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub retries: u64,
    pub mean_wall_clock: Option<f64>,
    pub speedup: Option<f64>,
    pub amdahl_bound: f64,
    /// Ideal speedup ceiling of the DAG: tasks over the makespan lower bound.
    pub dag_bound: f64,
    pub mean_tokens: Option<f64>,
    pub token_multiplier: Option<f64>,
    pub efficiency_gap: Option<f64>,
    pub messages_mean: f64,
    pub idle_rounds_mean: f64,
    pub concurrent_writes_mean: f64,
    pub rewrites_mean: f64,
    pub temporal_violations_mean: f64,
    pub failed_tests_mean: f64,
    pub failed_tests_per_round: f64,
    pub straggler_median: Option<f64>,
    pub straggler_mean: Option<f64>,
}

/// Cell identity without the team size.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MatchKey {
    pub benchmark: String,
    pub condition: String,
    pub scheme: String,
    pub persona: String,
}

impl MatchKey {
    pub fn of(record: &RunRecord) -> Self {
        let c = &record.config;
        Self {
            benchmark: c.benchmark.clone(),
            condition: c.condition.clone(),
            scheme: c.scheme.name().into(),
            persona: c.persona.clone(),
        }
    }

    fn of_row(row: &SummaryRow) -> Self {
        Self {
            benchmark: row.benchmark.clone(),
            condition: row.condition.clone(),
            scheme: row.scheme.clone(),
            persona: row.persona.clone(),
        }
    }
}

/// Mean wall-clock and tokens over the successful single-agent runs of a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baseline {
    pub wall_clock: f64,
    pub tokens: f64,
}

fn successful_means(records: &[&RunRecord]) -> Option<Baseline> {
    let ok: Vec<&&RunRecord> = records.iter().filter(|r| r.success).collect();
    if ok.is_empty() {
        return None;
    }
    let n = ok.len() as f64;
    Some(Baseline {
        wall_clock: ok.iter().map(|r| r.wall_clock_seconds).sum::<f64>() / n,
        tokens: ok.iter().map(|r| r.total_tokens as f64).sum::<f64>() / n,
    })
}

pub fn baselines(records: &[RunRecord]) -> BTreeMap<MatchKey, Baseline> {
    let mut singles: BTreeMap<MatchKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.config.n_agents == 1) {
        singles.entry(MatchKey::of(r)).or_default().push(r);
    }
    singles.into_iter().filter_map(|(k, v)| successful_means(&v).map(|b| (k, b))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunEfficiency {
    pub speedup: f64,
    pub token_multiplier: f64,
    pub efficiency_gap: f64,
}

/// Per-run speedup and token multiplier against the matched baseline.
/// Failed runs have no completion time and yield `None`.
pub fn run_efficiency(record: &RunRecord, baseline: &Baseline) -> Option<RunEfficiency> {
    if !record.success {
        return None;
    }
    let s = speedup(baseline.wall_clock, record.wall_clock_seconds).ok()?;
    let m = token_multiplier(record.total_tokens as f64, baseline.tokens).ok()?;
    Some(RunEfficiency { speedup: s, token_multiplier: m, efficiency_gap: efficiency_gap(m, s) })
}

fn mean_of(records: &[&RunRecord], f: impl Fn(&RunRecord) -> f64) -> f64 {
    mean(&records.iter().map(|r| f(r)).collect::<Vec<_>>()).unwrap_or(0.0)
}

/// Groups records by cell (first-appearance order) and summarizes each cell.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut order: Vec<(MatchKey, usize)> = Vec::new();
    let mut cells: BTreeMap<(MatchKey, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let k = (MatchKey::of(r), r.config.n_agents);
        let group = cells.entry(k.clone()).or_default();
        if group.is_empty() {
            order.push(k);
        }
        group.push(r);
    }
    let base = baselines(records);

    order
        .into_iter()
        .map(|k| {
            let group = &cells[&k];
            let (key, n) = k;
            let first = group[0];
            let graph = &first.config.graph;
            let successes = group.iter().filter(|r| r.success).count();
            let own = successful_means(group);
            let matched = base.get(&key);
            let speedup_v = own.zip(matched).and_then(|(o, b)| speedup(b.wall_clock, o.wall_clock).ok());
            let multiplier = own.zip(matched).and_then(|(o, b)| token_multiplier(o.tokens, b.tokens).ok());
            let gaps: Vec<f64> = group.iter().flat_map(|r| round_straggler_gaps(r, StragglerMode::OthersMean)).collect();
            let rounds: u64 = group.iter().map(|r| u64::from(r.rounds_executed)).sum();
            let failed: u64 = group.iter().map(|r| r.failed_tests_total()).sum();
            SummaryRow {
                benchmark: key.benchmark.clone(),
                condition: key.condition.clone(),
                p: first.config.p,
                scheme: key.scheme.clone(),
                persona: key.persona.clone(),
                n_agents: n,
                runs: group.len(),
                successes,
                success_rate: successes as f64 / group.len() as f64,
                retries: group.iter().map(|r| u64::from(r.attempt)).sum(),
                mean_wall_clock: own.map(|o| o.wall_clock),
                speedup: speedup_v,
                amdahl_bound: amdahl_bound(first.config.p.clamp(0.0, 1.0), n.max(1) as f64).unwrap_or(1.0),
                dag_bound: graph.len() as f64 / graph.makespan_lower_bound(n).max(1) as f64,
                mean_tokens: own.map(|o| o.tokens),
                token_multiplier: multiplier,
                efficiency_gap: multiplier.zip(speedup_v).map(|(m, s)| efficiency_gap(m, s)),
                messages_mean: mean_of(group, |r| overhead_counts(r).messages as f64),
                idle_rounds_mean: mean_of(group, |r| overhead_counts(r).idle_rounds as f64),
                concurrent_writes_mean: mean_of(group, |r| r.conflict_count(ConflictKind::ConcurrentWrite) as f64),
                rewrites_mean: mean_of(group, |r| r.conflict_count(ConflictKind::Rewrite) as f64),
                temporal_violations_mean: mean_of(group, |r| r.conflict_count(ConflictKind::TemporalViolation) as f64),
                failed_tests_mean: failed as f64 / group.len() as f64,
                failed_tests_per_round: if rounds == 0 { 0.0 } else { failed as f64 / rounds as f64 },
                straggler_median: median(&gaps),
                straggler_mean: mean(&gaps),
            }
        })
        .collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|source| ExperimentError::Output { path: path.to_path_buf(), source })
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, ExperimentError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

/// Pivot: one line per (scheme, persona, benchmark, condition, metric) with a
/// column per team size.
pub fn write_table1(path: &Path, rows: &[SummaryRow], agents: &[usize]) -> Result<(), ExperimentError> {
    let mut sizes: Vec<usize> = agents.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["scheme".to_string(), "persona".into(), "benchmark".into(), "condition".into(), "metric".into()];
    header.extend(sizes.iter().map(|n| format!("n{n}")));
    w.write_record(&header)?;

    let mut groups: BTreeMap<(String, String, String, String), BTreeMap<usize, &SummaryRow>> = BTreeMap::new();
    for row in rows {
        let k = MatchKey::of_row(row);
        groups.entry((k.scheme, k.persona, k.benchmark, k.condition)).or_default().insert(row.n_agents, row);
    }
    for ((scheme, persona, benchmark, condition), by_n) in &groups {
        for (metric, pick) in [
            ("speedup", (|r: &SummaryRow| r.speedup) as fn(&SummaryRow) -> Option<f64>),
            ("token_multiplier", |r: &SummaryRow| r.token_multiplier),
        ] {
            let mut line = vec![scheme.clone(), persona.clone(), benchmark.clone(), condition.clone(), metric.into()];
            line.extend(sizes.iter().map(|n| cell(by_n.get(n).and_then(|r| pick(r)))));
            w.write_record(&line)?;
        }
    }
    w.flush().map_err(|source| ExperimentError::Output { path: path.to_path_buf(), source })
}
