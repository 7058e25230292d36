//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

mod common;

use std::collections::BTreeMap;

use common::{check_run, list_schedule_rounds, ref_h, ref_rho, ref_u, ref_w, reference_assignment, rng, small_sample};
use rand::Rng;
use teamsim::experiment::summary::{baselines, run_efficiency, MatchKey};
use teamsim::experiment::{builtin_personas, execute, find_persona, summarize, ExperimentMatrix, Persona};
use teamsim::metrics::stats::{kruskal_wallis, mann_whitney_u, spearman_rho, wilcoxon_signed_rank};
use teamsim::metrics::{amdahl_bound, mean, median, overhead_counts, round_straggler_gaps, StragglerMode};
use teamsim::orchestrator::{run, CoordinationScheme, RunConfig, RunRecord};
use teamsim::workspace::{run_verifier, ConflictKind, FileState, Workspace};
use teamsim::{build_benchmark, Benchmark, Condition, TaskGraph, TaskId};

/// Tolerance for the asymptotic Amdahl values.
const AMDAHL_TOL: f64 = 1e-6;
/// Share of decentralized greedy runs that must show a concurrent write.
const CONCURRENT_WRITE_SHARE: f64 = 0.8;
/// Largest serial-condition speedup the chain permits: M / C = 20 / 16.
const SERIAL_CEILING: f64 = 1.25;
const JOBS: usize = 4;

type Criterion = (u8, &'static str, fn() -> (bool, String));

struct Verdict {
    id: u8,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn graph(b: Benchmark, c: Condition) -> TaskGraph {
    build_benchmark(b, c.dependency(20).unwrap()).unwrap()
}

fn persona(name: &str) -> Persona {
    find_persona(&builtin_personas(), name).unwrap()
}

fn config(c: Condition, scheme: CoordinationScheme, n: usize, p: &Persona, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::new(graph(Benchmark::MathUtils, c), scheme, n, p.profile.clone(), seed);
    cfg.condition = c.name().into();
    cfg.benchmark = Benchmark::MathUtils.name().into();
    cfg.p = c.parallel_fraction();
    cfg.persona = p.name.clone();
    cfg
}

fn records(m: &ExperimentMatrix) -> Vec<RunRecord> {
    execute(m, JOBS).unwrap().into_iter().map(|o| o.result.unwrap()).collect()
}

fn rho(x: &[f64], y: &[f64]) -> f64 {
    spearman_rho(x, y).map(|r| r.statistic).unwrap_or(f64::NAN)
}

fn amdahl_exactness() -> (bool, String) {
    let a: f64 = amdahl_bound(0.95, 1e12).unwrap();
    let b: f64 = amdahl_bound(0.5, 1e12).unwrap();
    let unit = [0.0, 0.2, 0.5, 0.9, 1.0].iter().all(|&p| amdahl_bound(p, 1.0).unwrap() == 1.0);
    let pass = (a - 20.0).abs() <= AMDAHL_TOL && (b - 2.0).abs() <= AMDAHL_TOL && unit;
    (pass, format!("A(0.95,inf)={a:.9} A(0.5,inf)={b:.9} A(p,1)=1 for all p: {unit}"))
}

fn oracle_equivalence() -> (bool, String) {
    let ideal = persona("ideal");
    let mut checked = 0;
    let mut bad = Vec::new();
    for b in Benchmark::ALL {
        for c in Condition::ALL {
            let g = graph(b, c);
            for n in 1..=5 {
                let rec = run(&config(c, CoordinationScheme::Preassigned, n, &ideal, 0)).unwrap();
                let expected = list_schedule_rounds(&g, &reference_assignment(&g, n));
                let floor = 2 * g.makespan_lower_bound(n);
                checked += 1;
                if !rec.success || rec.rounds_executed != expected || u64::from(rec.rounds_executed) < floor {
                    bad.push(format!("{b}/{c}/N{n}: got {} want {expected} floor {floor}", rec.rounds_executed));
                }
            }
        }
    }
    (bad.is_empty(), format!("{checked} cells, mismatches: {bad:?}"))
}

fn ordering() -> (bool, String) {
    let m = ExperimentMatrix {
        schemes: vec![CoordinationScheme::Preassigned],
        agents: vec![1, 5],
        personas: vec![persona("ideal")],
        ..Default::default()
    };
    let rows = summarize(&records(&m));
    let s = |c: &str| rows.iter().find(|r| r.condition == c && r.n_agents == 5).and_then(|r| r.speedup).unwrap_or(f64::NAN);
    let (par, mix, ser) = (s("parallel"), s("mixed"), s("serial"));
    let pass = par > mix && mix > ser && ser <= SERIAL_CEILING + 1e-12;
    (pass, format!("S(parallel)={par:.3} S(mixed)={mix:.3} S(serial)={ser:.3} ceiling {SERIAL_CEILING}"))
}

fn conflict_dichotomy() -> (bool, String) {
    let (ideal, greedy) = (persona("ideal"), persona("greedy"));
    let mut pre_conflicts = 0;
    let mut pre_failed = Vec::new();
    let mut dec_failed = Vec::new();
    let mut with_cw = 0;
    let mut dec_runs = 0;
    for n in [3, 5] {
        for i in 0..20u64 {
            let c = Condition::ALL[i as usize % 3];
            let seed = 1000 + i;
            let pre = run(&config(c, CoordinationScheme::Preassigned, n, &ideal, seed)).unwrap();
            pre_conflicts += pre.conflicts.len();
            pre_failed.push(pre.failed_tests_total() as f64);
            let dec = run(&config(c, CoordinationScheme::decentralized(), n, &greedy, seed)).unwrap();
            dec_runs += 1;
            if dec.conflict_count(ConflictKind::ConcurrentWrite) > 0 {
                with_cw += 1;
            }
            dec_failed.push(dec.failed_tests_total() as f64);
        }
    }
    let share = with_cw as f64 / dec_runs as f64;
    let (mp, md) = (median(&pre_failed).unwrap(), median(&dec_failed).unwrap());
    let pass = pre_conflicts == 0 && share >= CONCURRENT_WRITE_SHARE && md > mp;
    (
        pass,
        format!("preassigned conflicts={pre_conflicts}; decentralized runs with concurrent write {with_cw}/{dec_runs}; median failed tests {md} vs {mp}"),
    )
}

fn overhead_direction() -> (bool, String) {
    let m = ExperimentMatrix { personas: vec![persona("chatty")], reps: 10, ..Default::default() };
    let recs = records(&m);
    let mut messages: BTreeMap<(String, String, usize), u64> = BTreeMap::new();
    let mut idle: BTreeMap<(String, String), u64> = BTreeMap::new();
    let (mut xs, mut ns) = (Vec::new(), Vec::new());
    for r in &recs {
        let o = overhead_counts(r);
        let scheme = r.config.scheme.name().to_string();
        *messages.entry((r.config.condition.clone(), scheme.clone(), r.config.n_agents)).or_default() += o.messages;
        *idle.entry((r.config.condition.clone(), scheme)).or_default() += o.idle_rounds;
        xs.push(o.messages as f64);
        ns.push(r.config.n_agents as f64);
    }
    let mut losses = Vec::new();
    for c in Condition::ALL {
        for n in 2..=5 {
            let k = |s: &str| messages[&(c.name().to_string(), s.to_string(), n)];
            if k("decentralized") <= k("preassign") {
                losses.push(format!("{c}/N{n}: {} <= {}", k("decentralized"), k("preassign")));
            }
        }
    }
    let idle_ok = ["mixed", "serial"]
        .iter()
        .all(|c| idle[&(c.to_string(), "decentralized".into())] > idle[&(c.to_string(), "preassign".into())]);
    let r = rho(&xs, &ns);
    let pass = losses.is_empty() && r > 0.0 && idle_ok;
    (pass, format!("message losses {losses:?}; rho(messages,N)={r:.3}; idle dec>pre for mixed+serial: {idle_ok}"))
}

fn straggler_direction() -> (bool, String) {
    let p = persona("heavy-tail");
    let schemes = [CoordinationScheme::Preassigned, CoordinationScheme::decentralized()];
    let mut pooled = BTreeMap::new();
    let mut by_condition = BTreeMap::new();
    let mut rhos = BTreeMap::new();
    for scheme in schemes {
        let mut all = Vec::new();
        for c in Condition::ALL {
            let mut gaps = Vec::new();
            for seed in 0..50 {
                let rec = run(&config(c, scheme, 5, &p, seed)).unwrap();
                gaps.extend(round_straggler_gaps(&rec, StragglerMode::OthersMean));
            }
            by_condition.insert((scheme.name(), c), mean(&gaps).unwrap());
            all.extend(gaps);
        }
        pooled.insert(scheme.name(), mean(&all).unwrap());
        let (mut g, mut n) = (Vec::new(), Vec::new());
        for c in Condition::ALL {
            for agents in 1..=5 {
                for seed in 0..10 {
                    let rec = run(&config(c, scheme, agents, &p, 500 + seed)).unwrap();
                    g.push(mean(&round_straggler_gaps(&rec, StragglerMode::OthersMean)).unwrap());
                    n.push(agents as f64);
                }
            }
        }
        rhos.insert(scheme.name(), rho(&g, &n));
    }
    let (pre, dec) = (pooled["preassign"], pooled["decentralized"]);
    let (mix, par) = (by_condition[&("preassign", Condition::Mixed)], by_condition[&("preassign", Condition::Parallel)]);
    let pass = pre > dec && mix > par && rhos.values().all(|r| *r > 0.0);
    (
        pass,
        format!(
            "mean gap preassign={pre:.3}s decentralized={dec:.3}s; preassign mixed={mix:.3}s parallel={par:.3}s; rho(gap,N) pre={:.3} dec={:.3}",
            rhos["preassign"], rhos["decentralized"]
        ),
    )
}

fn token_gap() -> (bool, String) {
    let m = ExperimentMatrix { personas: builtin_personas(), ..Default::default() };
    let recs = records(&m);
    let base = baselines(&recs);
    let mut gaps: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let (mut mult, mut ns) = (Vec::new(), Vec::new());
    for r in &recs {
        let Some(e) = base.get(&MatchKey::of(r)).and_then(|b| run_efficiency(r, b)) else { continue };
        gaps.entry(r.config.scheme.name()).or_default().push(e.efficiency_gap);
        if r.config.scheme.reclaim_after().is_some() {
            mult.push(e.token_multiplier);
            ns.push(r.config.n_agents as f64);
        }
    }
    let (pre, dec) = (median(&gaps["preassign"]).unwrap(), median(&gaps["decentralized"]).unwrap());
    let r = rho(&mult, &ns);
    (dec > pre && r > 0.0, format!("{} runs; median gap dec={dec:.3} pre={pre:.3}; rho(multiplier,N) dec={r:.3}", recs.len()))
}

fn statistics_equivalence() -> (bool, String) {
    let mut g = rng(8);
    let mut mismatches = 0;
    for _ in 0..200 {
        let (a, b) = (small_sample(&mut g, 1), small_sample(&mut g, 1));
        if mann_whitney_u(&a, &b).unwrap().statistic != ref_u(&a, &b) {
            mismatches += 1;
        }
        if wilcoxon_signed_rank(&a).unwrap().statistic != ref_w(&a) {
            mismatches += 1;
        }
        let groups: Vec<Vec<f64>> = (0..g.random_range(2..=4)).map(|_| small_sample(&mut g, 1)).collect();
        let slices: Vec<&[f64]> = groups.iter().map(|v| v.as_slice()).collect();
        if kruskal_wallis(&slices).unwrap().statistic != ref_h(&groups) {
            mismatches += 1;
        }
        let x = small_sample(&mut g, 2);
        let y: Vec<f64> = x.iter().map(|_| f64::from(g.random_range(-4i32..=6))).collect();
        if spearman_rho(&x, &y).unwrap().statistic != ref_rho(&x, &y) {
            mismatches += 1;
        }
    }
    let mut symmetry_failures = 0;
    for _ in 0..1000 {
        let (a, b) = (small_sample(&mut g, 1), small_sample(&mut g, 1));
        let total = mann_whitney_u(&a, &b).unwrap().statistic + mann_whitney_u(&b, &a).unwrap().statistic;
        if total != (a.len() * b.len()) as f64 {
            symmetry_failures += 1;
        }
    }
    (mismatches == 0 && symmetry_failures == 0, format!("800 statistic checks, {mismatches} mismatches; 1000 U-symmetry pairs, {symmetry_failures} failures"))
}

fn determinism() -> (bool, String) {
    let m = ExperimentMatrix {
        personas: vec![persona("greedy"), persona("heavy-tail")],
        agents: vec![1, 3, 5],
        reps: 2,
        base_seed: 42,
        ..Default::default()
    };
    let lines = |jobs: usize| -> String {
        execute(&m, jobs).unwrap().into_iter().map(|o| o.result.unwrap().to_json_line() + "\n").collect()
    };
    let (one, again, many) = (lines(1), lines(1), lines(JOBS));
    let pass = one == again && one == many;
    (pass, format!("{} bytes; jobs=1 repeat identical: {}; jobs=1 vs jobs={JOBS} identical: {}", one.len(), one == again, one == many))
}

fn invariant_sweep() -> (bool, String) {
    let personas = builtin_personas();
    let mut g = rng(10);
    let mut failures = Vec::new();
    for i in 0..500 {
        let p = &personas[g.random_range(0..personas.len())];
        let scheme = if g.random::<bool>() { CoordinationScheme::Preassigned } else { CoordinationScheme::decentralized() };
        let c = Condition::ALL[g.random_range(0..3)];
        let n = g.random_range(1..=5);
        let rec = run(&config(c, scheme, n, p, g.random())).unwrap();
        if let Err(e) = check_run(&rec) {
            failures.push(format!("run {i}: {e}"));
        }
    }
    let mut verifier_failures = 0;
    for _ in 0..500 {
        let gr = common::random_dag(&mut g, 10);
        let mut ws = Workspace::new(&gr);
        let file = |t: TaskId, task: TaskId, correct: bool| FileState {
            path: gr.path_of(t),
            implementing_task: task,
            author: 0,
            written_round: 1,
            correct,
            version: 1,
        };
        for t in gr.ids() {
            if g.random::<f64>() < 0.6 {
                ws.insert_file(file(t, t, g.random::<f64>() < 0.7));
            }
        }
        let before = run_verifier(&ws, &gr);
        let t = TaskId(g.random_range(1..=gr.len() as u32));
        let mut fixed = ws.clone();
        fixed.insert_file(file(t, t, true));
        let after = run_verifier(&fixed, &gr);
        let others = |f: &[TaskId]| f.iter().filter(|x| **x != t).count();
        let mut clobbered = ws.clone();
        clobbered.insert_file(file(t, t, false));
        if others(&after.failing) > others(&before.failing) || run_verifier(&clobbered, &gr).failed < before.failed {
            verifier_failures += 1;
        }
    }
    let pass = failures.is_empty() && verifier_failures == 0;
    (pass, format!("500 runs, violations {:?}; 500 verifier cases, {verifier_failures} monotonicity failures", failures.iter().take(3).collect::<Vec<_>>()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "amdahl exactness", amdahl_exactness),
        (2, "oracle equivalence", oracle_equivalence),
        (3, "speedup ordering", ordering),
        (4, "conflict dichotomy", conflict_dichotomy),
        (5, "overhead direction", overhead_direction),
        (6, "straggler direction", straggler_direction),
        (7, "token-speedup gap", token_gap),
        (8, "statistics equivalence", statistics_equivalence),
        (9, "determinism", determinism),
        (10, "invariant sweep", invariant_sweep),
    ];
    let verdicts: Vec<Verdict> = criteria
        .iter()
        .map(|&(id, name, check)| {
            let (pass, detail) = check();
            Verdict { id, name, pass, detail }
        })
        .collect();
    for v in &verdicts {
        println!("[{}] {:>2} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.id, v.name, v.detail);
    }
    let failed = verdicts.iter().filter(|v| !v.pass).count();
    println!("acceptance: {}/{} criteria passed", verdicts.len() - failed, verdicts.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
