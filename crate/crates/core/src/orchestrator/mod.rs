//! The synchronous round loop.
//!
//! Each round: reclaim stalled claims (decentralized only), snapshot the
//! ledger, let every agent decide against that snapshot, then apply all
//! actions in agent-index order. Feedback produced while applying is
//! delivered with the next round's observation.

pub mod ledger;

use std::collections::{BTreeMap, BinaryHeap};
use std::cmp::Reverse;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    action_tokens, decide, sample_latency, AgentAction, AgentProfile, AgentState, Feedback, Observation, ProfileError,
};
use crate::taskgraph::{TaskGraph, TaskId};
use crate::workspace::{
    detect_conflicts, run_verifier, CompletionMark, ConflictEvent, ConflictKind, LockOutcome, LockTable, WriteEvent,
    Workspace,
};
use ledger::{TaskLedger, TaskStatus};

pub const DEFAULT_ROUND_CAP: u32 = 60;
pub const DEFAULT_RECLAIM_AFTER: u32 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error("team size must be at least 1")]
    NoAgents,
    #[error("round cap must be at least 1")]
    ZeroRoundCap,
    #[error("reclaim_after must be at least 1")]
    ZeroReclaim,
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CoordinationScheme {
    Preassigned,
    Decentralized { reclaim_after: u32 },
}

impl CoordinationScheme {
    pub fn decentralized() -> Self {
        CoordinationScheme::Decentralized { reclaim_after: DEFAULT_RECLAIM_AFTER }
    }

    pub fn name(self) -> &'static str {
        match self {
            CoordinationScheme::Preassigned => "preassign",
            CoordinationScheme::Decentralized { .. } => "decentralized",
        }
    }

    pub fn reclaim_after(self) -> Option<u32> {
        match self {
            CoordinationScheme::Preassigned => None,
            CoordinationScheme::Decentralized { reclaim_after } => Some(reclaim_after),
        }
    }
}

impl fmt::Display for CoordinationScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub benchmark: String,
    pub condition: String,
    pub p: f64,
    pub graph: TaskGraph,
    pub scheme: CoordinationScheme,
    pub n_agents: usize,
    pub persona: String,
    pub profile: AgentProfile,
    pub seed: u64,
    pub round_cap: u32,
}

impl RunConfig {
    pub fn new(graph: TaskGraph, scheme: CoordinationScheme, n_agents: usize, profile: AgentProfile, seed: u64) -> Self {
        let p = 1.0 - graph.critical_path_length() as f64 / graph.total_work().max(1) as f64;
        Self {
            benchmark: "custom".into(),
            condition: "custom".into(),
            p,
            graph,
            scheme,
            n_agents,
            persona: profile.behavior.name().into(),
            profile,
            seed,
            round_cap: DEFAULT_ROUND_CAP,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.n_agents == 0 {
            return Err(RunError::NoAgents);
        }
        if self.round_cap == 0 {
            return Err(RunError::ZeroRoundCap);
        }
        if self.scheme.reclaim_after() == Some(0) {
            return Err(RunError::ZeroReclaim);
        }
        self.profile.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Outcome {
    Granted,
    Denied { holder: Option<usize> },
    LockDenied { holder: usize },
    Applied { version: u32, correct: bool },
    Rejected,
    Tests { failed: usize },
    Done,
    Sent,
    Noop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub action: AgentAction,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTurn {
    pub actions: Vec<ActionRecord>,
    pub latency: f64,
    pub tokens: u64,
    /// A claim was granted, an owned task was edited, or a task was completed.
    pub productive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reclaimed: Vec<TaskId>,
    pub agents: Vec<AgentTurn>,
    pub failed_tests: u64,
    pub lock_denials: u64,
}

impl RoundRecord {
    pub fn latencies(&self) -> Vec<f64> {
        self.agents.iter().map(|t| t.latency).collect()
    }

    pub fn max_latency(&self) -> f64 {
        self.agents.iter().map(|t| t.latency).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerEventKind {
    Claimed,
    Completed,
    Reclaimed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEvent {
    pub seq: u64,
    pub round: u32,
    pub task: TaskId,
    pub agent: usize,
    pub kind: LedgerEventKind,
}

/// Full event log and summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    #[serde(default)]
    pub attempt: u32,
    pub assignment: Option<Vec<Vec<TaskId>>>,
    pub rounds: Vec<RoundRecord>,
    pub ledger_history: Vec<LedgerEvent>,
    pub writes: Vec<WriteEvent>,
    pub conflicts: Vec<ConflictEvent>,
    pub rounds_executed: u32,
    pub wall_clock_seconds: f64,
    pub total_tokens: u64,
    pub success: bool,
    pub tasks_completed: usize,
    pub failed_tests_per_round: Vec<u64>,
    pub lock_denials: u64,
    pub messages_per_agent: Vec<u64>,
    pub idle_rounds_per_agent: Vec<u64>,
}

impl RunRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("run record serializes")
    }

    pub fn from_json(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }

    pub fn conflict_count(&self, kind: ConflictKind) -> usize {
        self.conflicts.iter().filter(|c| c.kind == kind).count()
    }

    pub fn failed_tests_total(&self) -> u64 {
        self.failed_tests_per_round.iter().sum()
    }
}

/// Sum over rounds of the slowest agent's latency.
pub fn sum_of_round_maxima<'a>(rounds: impl IntoIterator<Item = &'a [f64]>) -> f64 {
    rounds.into_iter().map(|r| r.iter().copied().fold(0.0, f64::max)).sum()
}

pub fn wall_clock(record: &RunRecord) -> f64 {
    record.rounds.iter().map(RoundRecord::max_latency).sum()
}

/// Topological order, lowest id first among available tasks.
fn topo_order(graph: &TaskGraph) -> Vec<TaskId> {
    let m = graph.len();
    let mut indegree: Vec<usize> = graph.tasks().iter().map(|t| t.deps.len()).collect();
    let mut dependents = vec![Vec::new(); m];
    for t in graph.tasks() {
        for d in &t.deps {
            dependents[d.index()].push(t.id);
        }
    }
    let mut heap: BinaryHeap<Reverse<TaskId>> =
        graph.tasks().iter().filter(|t| t.deps.is_empty()).map(|t| Reverse(t.id)).collect();
    let mut order = Vec::with_capacity(m);
    while let Some(Reverse(id)) = heap.pop() {
        order.push(id);
        for &j in &dependents[id.index()] {
            indegree[j.index()] -= 1;
            if indegree[j.index()] == 0 {
                heap.push(Reverse(j));
            }
        }
    }
    order
}

/// The longest dependency chain, ties broken towards lower ids.
fn longest_chain(graph: &TaskGraph, order: &[TaskId]) -> Vec<TaskId> {
    let m = graph.len();
    let mut dist = vec![0u64; m];
    let mut pred: Vec<Option<TaskId>> = vec![None; m];
    for &id in order {
        let best = graph.deps(id).iter().copied().max_by(|a, b| dist[a.index()].cmp(&dist[b.index()]).then(b.cmp(a)));
        dist[id.index()] = best.map_or(0, |b| dist[b.index()]) + u64::from(graph.tasks()[id.index()].work);
        pred[id.index()] = best;
    }
    let Some(end) = graph.ids().max_by(|a, b| dist[a.index()].cmp(&dist[b.index()]).then(b.cmp(a))) else {
        return Vec::new();
    };
    let mut chain = vec![end];
    while let Some(p) = pred[chain.last().unwrap().index()] {
        chain.push(p);
    }
    chain.reverse();
    chain
}

/// Central allocation: the longest chain goes to agent 0, every other task is
/// dealt in topological order to the least-loaded agent (lowest index on
/// ties). Each agent's list is in topological order.
pub fn preassign(graph: &TaskGraph, n_agents: usize) -> Vec<Vec<TaskId>> {
    let n = n_agents.max(1);
    let order = topo_order(graph);
    let position: BTreeMap<TaskId, usize> = order.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let chain = longest_chain(graph, &order);
    let work = |t: TaskId| u64::from(graph.tasks()[t.index()].work);

    let mut lists = vec![Vec::new(); n];
    let mut loads = vec![0u64; n];
    for &t in &chain {
        lists[0].push(t);
        loads[0] += work(t);
    }
    for &t in order.iter().filter(|t| !chain.contains(t)) {
        let agent = (0..n).min_by_key(|&a| (loads[a], a)).unwrap_or(0);
        lists[agent].push(t);
        loads[agent] += work(t);
    }
    for list in &mut lists {
        list.sort_by_key(|t| position[t]);
    }
    lists
}

/// Per-agent random stream derived from the run seed and the agent index.
pub fn agent_rng(seed: u64, agent: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(agent as u64);
    rng
}

/// Executes one run to completion or to the round cap.
pub fn run(config: &RunConfig) -> Result<RunRecord, RunError> {
    config.validate()?;
    let graph = &config.graph;
    let profile = &config.profile;
    let n = config.n_agents;
    let assignment = match config.scheme {
        CoordinationScheme::Preassigned => Some(preassign(graph, n)),
        CoordinationScheme::Decentralized { .. } => None,
    };
    let reclaim_after = config.scheme.reclaim_after();

    let mut ledger = TaskLedger::new(graph.len());
    let mut ws = Workspace::new(graph);
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|a| agent_rng(config.seed, a)).collect();
    let mut states = vec![AgentState::default(); n];
    let mut feedback: Vec<Vec<Feedback>> = vec![Vec::new(); n];

    let mut seq = 0u64;
    let mut rounds = Vec::new();
    let mut history = Vec::new();
    let mut writes = Vec::new();
    let mut messages = vec![0u64; n];
    let mut idle = vec![0u64; n];
    let mut success = false;

    for round in 1..=config.round_cap {
        let mut reclaimed = Vec::new();
        if let Some(after) = reclaim_after {
            for (task, agent) in ledger.reclaim_stale(round, after) {
                seq += 1;
                history.push(LedgerEvent { seq, round, task, agent, kind: LedgerEventKind::Reclaimed });
                reclaimed.push(task);
            }
        }

        // Locks are released at every round end, so the round-start table is
        // empty; decentralized edits are checked against it.
        let snapshot = ledger.clone();
        let round_start_locks = LockTable::new();
        let mut live_locks = LockTable::new();

        let decisions: Vec<(Vec<AgentAction>, f64)> = (0..n)
            .map(|a| {
                let self_check = snapshot.in_progress_of(a).map(|t| (t, ws.check_file(graph, t))).collect();
                let obs = Observation {
                    round,
                    agent: a,
                    graph,
                    ledger: &snapshot,
                    assignment: assignment.as_ref().map(|lists| lists[a].as_slice()),
                    reclaim_after,
                    feedback: &feedback[a],
                    self_check: &self_check,
                };
                let actions = decide(profile, &mut states[a], &obs, &mut rngs[a]);
                let mut latency = sample_latency(&profile.latency, &mut rngs[a]);
                if !actions.iter().any(AgentAction::is_task_action) {
                    latency *= profile.idle_latency_scale;
                }
                (actions, latency)
            })
            .collect();

        let mut next_feedback: Vec<Vec<Feedback>> = vec![Vec::new(); n];
        let mut turns = Vec::with_capacity(n);
        let mut failed_tests = 0u64;
        let mut lock_denials = 0u64;

        for (a, (actions, latency)) in decisions.into_iter().enumerate() {
            let tokens = action_tokens(profile, &actions);
            let mut productive = false;
            let mut records = Vec::with_capacity(actions.len());
            for action in actions {
                let outcome = match &action {
                    AgentAction::Claim { task } => {
                        let task = *task;
                        if !graph.contains(task) {
                            Outcome::Rejected
                        } else if !graph.deps(task).iter().all(|d| ledger.status(*d) == TaskStatus::Done) {
                            let holder = ledger.owner(task);
                            next_feedback[a].push(Feedback::ClaimDenied { task, holder });
                            Outcome::Denied { holder }
                        } else {
                            match ledger.claim(task, a, round) {
                                Ok(()) => {
                                    seq += 1;
                                    history.push(LedgerEvent { seq, round, task, agent: a, kind: LedgerEventKind::Claimed });
                                    productive = true;
                                    Outcome::Granted
                                }
                                Err(holder) => {
                                    next_feedback[a].push(Feedback::ClaimDenied { task, holder });
                                    Outcome::Denied { holder }
                                }
                            }
                        }
                    }
                    AgentAction::Edit { path, task, correct } => {
                        let lock = match config.scheme {
                            CoordinationScheme::Preassigned => live_locks.acquire(path, a),
                            CoordinationScheme::Decentralized { .. } => {
                                live_locks.acquire(path, a);
                                match round_start_locks.holder(path) {
                                    Some(holder) if holder != a => LockOutcome::Denied { holder },
                                    _ => LockOutcome::Granted,
                                }
                            }
                        };
                        match lock {
                            LockOutcome::Denied { holder } => {
                                lock_denials += 1;
                                next_feedback[a].push(Feedback::LockDenied { path: path.clone(), holder });
                                Outcome::LockDenied { holder }
                            }
                            LockOutcome::Granted => match ws.apply_edit(a, path, *task, *correct, round) {
                                Ok(state) => {
                                    seq += 1;
                                    writes.push(WriteEvent {
                                        seq,
                                        round,
                                        agent: a,
                                        path: path.clone(),
                                        task: *task,
                                        correct: state.correct,
                                        version: state.version,
                                    });
                                    if ledger.touch(*task, a, round) {
                                        productive = true;
                                    }
                                    Outcome::Applied { version: state.version, correct: state.correct }
                                }
                                Err(_) => Outcome::Rejected,
                            },
                        }
                    }
                    AgentAction::RunTests => {
                        let report = run_verifier(&ws, graph);
                        failed_tests += report.failed as u64;
                        let failed = report.failed;
                        next_feedback[a].push(Feedback::Tests { failed, failing: report.failing });
                        Outcome::Tests { failed }
                    }
                    AgentAction::Complete { task } => {
                        let task = *task;
                        if graph.contains(task) && ledger.complete(task, a, round) {
                            seq += 1;
                            history.push(LedgerEvent { seq, round, task, agent: a, kind: LedgerEventKind::Completed });
                            productive = true;
                            Outcome::Done
                        } else {
                            next_feedback[a].push(Feedback::CompleteDenied { task });
                            Outcome::Denied { holder: if graph.contains(task) { ledger.owner(task) } else { None } }
                        }
                    }
                    AgentAction::Message { .. } => {
                        messages[a] += 1;
                        Outcome::Sent
                    }
                    AgentAction::Idle => Outcome::Noop,
                };
                records.push(ActionRecord { action, outcome });
            }
            if !productive {
                idle[a] += 1;
            }
            turns.push(AgentTurn { actions: records, latency, tokens, productive });
        }
        live_locks.release_all();
        feedback = next_feedback;

        rounds.push(RoundRecord { round, reclaimed, agents: turns, failed_tests, lock_denials });
        if ledger.all_done() {
            success = true;
            break;
        }
    }

    let completions: Vec<CompletionMark> = history
        .iter()
        .filter(|e| e.kind == LedgerEventKind::Completed)
        .map(|e| CompletionMark { seq: e.seq, task: e.task })
        .collect();
    let conflicts = detect_conflicts(&writes, &completions, graph);
    let wall_clock_seconds = rounds.iter().map(RoundRecord::max_latency).sum();
    let total_tokens = rounds.iter().flat_map(|r| r.agents.iter()).map(|t| t.tokens).sum();

    Ok(RunRecord {
        config: config.clone(),
        attempt: 0,
        assignment,
        rounds_executed: rounds.len() as u32,
        failed_tests_per_round: rounds.iter().map(|r| r.failed_tests).collect(),
        lock_denials: rounds.iter().map(|r| r.lock_denials).sum(),
        rounds,
        ledger_history: history,
        writes,
        conflicts,
        wall_clock_seconds,
        total_tokens,
        success,
        tasks_completed: ledger.done_count(),
        messages_per_agent: messages,
        idle_rounds_per_agent: idle,
    })
}
