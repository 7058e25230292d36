//! Brute-force references shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teamsim::orchestrator::{LedgerEventKind, RunRecord};
use teamsim::taskgraph::TaskSpec;
use teamsim::workspace::ConflictKind;
use teamsim::{TaskGraph, TaskId};

/// Every source-to-sink path, by exhaustive depth-first search.
fn all_paths(graph: &TaskGraph) -> Vec<Vec<TaskId>> {
    let ids: Vec<TaskId> = graph.ids().collect();
    let succ = |t: TaskId| -> Vec<TaskId> { ids.iter().copied().filter(|s| graph.deps(*s).contains(&t)).collect() };
    let mut out = Vec::new();
    let mut stack: Vec<Vec<TaskId>> = ids.iter().filter(|t| graph.deps(**t).is_empty()).map(|t| vec![*t]).collect();
    while let Some(path) = stack.pop() {
        let next = succ(*path.last().unwrap());
        if next.is_empty() {
            out.push(path);
        } else {
            for s in next {
                let mut p = path.clone();
                p.push(s);
                stack.push(p);
            }
        }
    }
    out
}

/// The heaviest path; ties go to the lowest end task, then the lowest
/// predecessors walking backwards.
pub fn reference_chain(graph: &TaskGraph) -> Vec<TaskId> {
    let weight = |p: &Vec<TaskId>| -> u64 { p.iter().map(|t| u64::from(graph.task(*t).unwrap().work)).sum() };
    let paths = all_paths(graph);
    let best = paths.iter().map(weight).max().unwrap_or(0);
    paths
        .into_iter()
        .filter(|p| weight(p) == best)
        .min_by_key(|p| p.iter().rev().copied().collect::<Vec<_>>())
        .unwrap_or_default()
}

/// Chain to agent 0, then the rest dealt in id order to the least-loaded
/// agent. Assumes every dependency has a lower id than its dependent.
pub fn reference_assignment(graph: &TaskGraph, n: usize) -> Vec<Vec<TaskId>> {
    let work = |t: TaskId| u64::from(graph.task(t).unwrap().work);
    let chain = reference_chain(graph);
    let mut owner: BTreeMap<TaskId, usize> = chain.iter().map(|t| (*t, 0)).collect();
    let mut load = vec![0u64; n];
    load[0] = chain.iter().map(|t| work(*t)).sum();
    for t in graph.ids().filter(|t| !owner.contains_key(t)).collect::<Vec<_>>() {
        let agent = (0..n).min_by_key(|&a| (load[a], a)).unwrap();
        owner.insert(t, agent);
        load[agent] += work(t);
    }
    (0..n).map(|a| graph.ids().filter(|t| owner[t] == a).collect()).collect()
}

/// Unit-task list schedule in two-round slots: in each slot every agent
/// starts the first task of its list whose dependencies finished in an
/// earlier slot. Returns rounds to completion.
pub fn list_schedule_rounds(graph: &TaskGraph, lists: &[Vec<TaskId>]) -> u32 {
    let mut finished: BTreeMap<TaskId, u32> = BTreeMap::new();
    let mut slot = 0;
    while finished.len() < graph.len() {
        let mut started = Vec::new();
        for list in lists {
            let ready = list.iter().copied().find(|t| {
                !finished.contains_key(t) && graph.deps(*t).iter().all(|d| finished.get(d).is_some_and(|&s| s < slot))
            });
            if let Some(t) = ready {
                started.push(t);
            }
        }
        assert!(!started.is_empty() || finished.len() == graph.len(), "schedule stalled");
        for t in started {
            finished.insert(t, slot);
        }
        slot += 1;
    }
    2 * slot
}

/// Random DAG whose dependencies always point at lower ids.
pub fn random_dag(rng: &mut ChaCha8Rng, max_tasks: usize) -> TaskGraph {
    let m = rng.random_range(1..=max_tasks);
    let tasks = (1..=m as u32)
        .map(|id| {
            let deps = (1..id).filter(|_| rng.random::<f64>() < 0.25).map(TaskId).collect();
            TaskSpec { id: TaskId(id), label: format!("t{id}"), deps, work: 1 }
        })
        .collect();
    TaskGraph::new(tasks).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---- rank statistics by counting ----

fn count_rank(x: f64, all: &[f64]) -> f64 {
    let less = all.iter().filter(|v| **v < x).count();
    let equal = all.iter().filter(|v| **v == x).count();
    (2 * less + equal + 1) as f64 / 2.0
}

fn tie_sum(all: &[f64]) -> f64 {
    let mut seen: Vec<f64> = Vec::new();
    let mut sum = 0.0;
    for &v in all {
        if !seen.contains(&v) {
            seen.push(v);
            let t = all.iter().filter(|x| **x == v).count() as f64;
            sum += t * t * t - t;
        }
    }
    sum
}

pub fn ref_u(a: &[f64], b: &[f64]) -> f64 {
    let mut u = 0.0;
    for x in a {
        for y in b {
            if x > y {
                u += 1.0;
            } else if x == y {
                u += 0.5;
            }
        }
    }
    u
}

pub fn ref_w(diffs: &[f64]) -> f64 {
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let mags: Vec<f64> = nz.iter().map(|d| d.abs()).collect();
    let (mut plus, mut minus) = (0.0, 0.0);
    for d in &nz {
        let r = count_rank(d.abs(), &mags);
        if *d > 0.0 {
            plus += r;
        } else {
            minus += r;
        }
    }
    f64::min(plus, minus)
}

pub fn ref_h(groups: &[Vec<f64>]) -> f64 {
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let correction = 1.0 - tie_sum(&pooled) / (n * n * n - n);
    if correction <= 0.0 {
        return 0.0;
    }
    let mut between = 0.0;
    for g in groups {
        let r = g.iter().map(|x| count_rank(*x, &pooled)).fold(0.0, |s, x| s + x);
        between += r * r / g.len() as f64;
    }
    f64::max((12.0 / (n * (n + 1.0)) * between - 3.0 * (n + 1.0)) / correction, 0.0)
}

pub fn ref_rho(x: &[f64], y: &[f64]) -> f64 {
    let rx: Vec<f64> = x.iter().map(|v| count_rank(*v, x)).collect();
    let ry: Vec<f64> = y.iter().map(|v| count_rank(*v, y)).collect();
    let n = x.len() as f64;
    let mx = rx.iter().fold(0.0, |s, r| s + r) / n;
    let my = ry.iter().fold(0.0, |s, r| s + r) / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Small integer-valued sample, so ties are common.
pub fn small_sample(rng: &mut ChaCha8Rng, min_len: usize) -> Vec<f64> {
    let len = rng.random_range(min_len..=8);
    (0..len).map(|_| f64::from(rng.random_range(-4i32..=6))).collect()
}

// ---- run invariants ----

/// Checks one record against the protocol's safety and bookkeeping rules.
pub fn check_run(rec: &RunRecord) -> Result<(), String> {
    let graph = &rec.config.graph;
    let m = graph.len();
    let fail = |msg: String| Err(msg);

    // Ledger conservation: replay the history.
    let mut status: Vec<(u8, Option<usize>)> = vec![(0, None); m];
    let mut done_seq: BTreeMap<TaskId, u64> = BTreeMap::new();
    let mut last_seq = 0;
    for e in &rec.ledger_history {
        if e.seq <= last_seq {
            return fail(format!("ledger seq not increasing at {}", e.seq));
        }
        last_seq = e.seq;
        let slot = &mut status[e.task.index()];
        match e.kind {
            LedgerEventKind::Claimed => {
                if slot.0 != 0 {
                    return fail(format!("task {} claimed while not unclaimed", e.task));
                }
                // Dependency safety.
                for d in graph.deps(e.task) {
                    if !done_seq.get(d).is_some_and(|&s| s < e.seq) {
                        return fail(format!("task {} claimed before dependency {d} was done", e.task));
                    }
                }
                *slot = (1, Some(e.agent));
            }
            LedgerEventKind::Completed => {
                if *slot != (1, Some(e.agent)) {
                    return fail(format!("task {} completed by non-owner {}", e.task, e.agent));
                }
                *slot = (2, Some(e.agent));
                done_seq.insert(e.task, e.seq);
            }
            LedgerEventKind::Reclaimed => {
                if *slot != (1, Some(e.agent)) {
                    return fail(format!("task {} reclaimed from non-owner", e.task));
                }
                *slot = (0, None);
            }
        }
    }
    let done = status.iter().filter(|s| s.0 == 2).count();
    if done != rec.tasks_completed {
        return fail(format!("done count {done} != tasks_completed {}", rec.tasks_completed));
    }
    if rec.success != (done == m) {
        return fail("success flag disagrees with ledger".into());
    }
    if rec.rounds_executed as usize != rec.rounds.len() || rec.rounds_executed > rec.config.round_cap {
        return fail("round count out of bounds".into());
    }

    // Lock safety: the live lock table never lets two agents write one path in one round.
    let mut writers: BTreeMap<(u32, &str), BTreeSet<usize>> = BTreeMap::new();
    for w in &rec.writes {
        writers.entry((w.round, w.path.as_str())).or_default().insert(w.agent);
    }
    let multi: BTreeMap<(u32, &str), &BTreeSet<usize>> = writers.iter().filter(|(_, a)| a.len() >= 2).map(|(k, v)| (*k, v)).collect();
    if rec.config.scheme.reclaim_after().is_none() && !multi.is_empty() {
        return fail("preassigned run has a same-round multi-writer path".into());
    }

    // Conflict completeness against a brute-force scan of the write log.
    let cw: Vec<_> = rec.conflicts.iter().filter(|c| c.kind == ConflictKind::ConcurrentWrite).collect();
    if cw.len() != multi.len() {
        return fail(format!("{} concurrent-write events for {} multi-writer paths", cw.len(), multi.len()));
    }
    for c in &cw {
        let agents: BTreeSet<usize> = c.agents.iter().copied().collect();
        if multi.get(&(c.round, c.path.as_str())) != Some(&&agents) {
            return fail(format!("concurrent write at round {} on {} misreported", c.round, c.path));
        }
    }
    let mut rewrites = 0;
    let mut temporal = 0;
    for (i, w) in rec.writes.iter().enumerate() {
        if let Some(prev) = rec.writes[..i].iter().rev().find(|p| p.path == w.path) {
            if prev.agent != w.agent && prev.round < w.round {
                rewrites += 1;
            }
        }
        if graph.deps(w.task).iter().any(|d| !done_seq.get(d).is_some_and(|&s| s < w.seq)) {
            temporal += 1;
        }
    }
    if rewrites != rec.conflict_count(ConflictKind::Rewrite) {
        return fail(format!("{rewrites} rewrites, {} reported", rec.conflict_count(ConflictKind::Rewrite)));
    }
    if temporal != rec.conflict_count(ConflictKind::TemporalViolation) {
        return fail(format!(
            "{temporal} temporal violations, {} reported",
            rec.conflict_count(ConflictKind::TemporalViolation)
        ));
    }

    // Overhead and token bookkeeping.
    let n = rec.config.n_agents;
    let mut messages = vec![0u64; n];
    let mut idle = vec![0u64; n];
    let mut tokens = 0;
    let mut wall = 0.0;
    for r in &rec.rounds {
        if r.agents.len() != n {
            return fail(format!("round {} has {} turns", r.round, r.agents.len()));
        }
        let lat = r.latencies();
        let gap = teamsim::metrics::straggler_gap(&lat, Default::default()).map_err(|e| e.to_string())?;
        if gap < 0.0 || lat.iter().any(|l| !(*l > 0.0)) {
            return fail(format!("bad latency or gap in round {}", r.round));
        }
        wall += lat.iter().copied().fold(0.0, f64::max);
        for (a, t) in r.agents.iter().enumerate() {
            tokens += t.tokens;
            messages[a] += t.actions.iter().filter(|x| matches!(x.action, teamsim::AgentAction::Message { .. })).count() as u64;
            if !t.productive {
                idle[a] += 1;
            }
        }
    }
    if messages != rec.messages_per_agent || idle != rec.idle_rounds_per_agent {
        return fail("overhead counters disagree with the turn log".into());
    }
    if tokens != rec.total_tokens || wall != rec.wall_clock_seconds {
        return fail("token or wall-clock totals disagree with the turn log".into());
    }
    Ok(())
}
