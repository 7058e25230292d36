//! Agent action vocabulary and the parameterized behavior models that stand in
//! for LLM teammates.
//!
//! A behavior model sees only its [`Observation`]: the round-start ledger
//! snapshot, its own assignment (preassigned runs), the previous round's
//! feedback and a self-check of the files it is currently implementing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::orchestrator::ledger::{TaskLedger, TaskStatus};
use crate::taskgraph::{TaskGraph, TaskId};
use crate::workspace::FileCheck;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("{name} = {value} is not a probability")]
    Probability { name: &'static str, value: f64 },
    #[error("invalid latency model: {0}")]
    Latency(String),
    #[error("idle latency scale must be positive, got {0}")]
    IdleScale(f64),
    #[error("unknown behavior kind '{0}'")]
    UnknownBehavior(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AgentAction {
    Claim { task: TaskId },
    Edit { path: String, task: TaskId, correct: bool },
    RunTests,
    Complete { task: TaskId },
    Message { tokens: u32 },
    Idle,
}

impl AgentAction {
    /// Claims, edits, test runs and completions; everything an agent does
    /// other than talk or wait.
    pub fn is_task_action(&self) -> bool {
        !matches!(self, AgentAction::Message { .. } | AgentAction::Idle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseLatency {
    Constant { seconds: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

/// Per-round response latency.
///
/// The heavy-tail variant adds, with probability `q_spike`, a Pareto spike of
/// scale `spike` and tail index `shape` to the base draw. Without a `shape`
/// the spike is exactly `spike` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatencyModel {
    Constant { seconds: f64 },
    LogNormal { mu: f64, sigma: f64 },
    HeavyTail {
        base: BaseLatency,
        spike: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        shape: Option<f64>,
        q_spike: f64,
    },
}

impl LatencyModel {
    pub fn validate(&self) -> Result<(), ProfileError> {
        let base_ok = |b: &BaseLatency| match *b {
            BaseLatency::Constant { seconds } if !(seconds > 0.0 && seconds.is_finite()) => {
                Err(ProfileError::Latency(format!("constant latency {seconds} must be positive")))
            }
            BaseLatency::LogNormal { mu, sigma } if !(mu.is_finite() && sigma >= 0.0 && sigma.is_finite()) => {
                Err(ProfileError::Latency(format!("lognormal(mu={mu}, sigma={sigma})")))
            }
            _ => Ok(()),
        };
        match self {
            LatencyModel::Constant { seconds } => base_ok(&BaseLatency::Constant { seconds: *seconds }),
            LatencyModel::LogNormal { mu, sigma } => base_ok(&BaseLatency::LogNormal { mu: *mu, sigma: *sigma }),
            LatencyModel::HeavyTail { base, spike, shape, q_spike } => {
                base_ok(base)?;
                if !(*spike >= 0.0 && spike.is_finite()) {
                    return Err(ProfileError::Latency(format!("spike magnitude {spike}")));
                }
                if let Some(a) = shape {
                    if !(*a > 0.0) {
                        return Err(ProfileError::Latency(format!("pareto shape {a}")));
                    }
                }
                check_probability("q_spike", *q_spike)
            }
        }
    }
}

fn sample_base<R: Rng + ?Sized>(base: BaseLatency, rng: &mut R) -> f64 {
    match base {
        BaseLatency::Constant { seconds } => seconds,
        BaseLatency::LogNormal { mu, sigma } => {
            let z: f64 = rng.sample(StandardNormal);
            (mu + sigma * z).exp().max(f64::MIN_POSITIVE)
        }
    }
}

/// Draws one round latency in seconds. Always positive.
pub fn sample_latency<R: Rng + ?Sized>(model: &LatencyModel, rng: &mut R) -> f64 {
    match *model {
        LatencyModel::Constant { seconds } => seconds,
        LatencyModel::LogNormal { mu, sigma } => sample_base(BaseLatency::LogNormal { mu, sigma }, rng),
        LatencyModel::HeavyTail { base, spike, shape, q_spike } => {
            let base = sample_base(base, rng);
            // Both uniforms are always drawn so the stream position does not
            // depend on whether a spike fired.
            let fire: f64 = rng.random();
            let u = 1.0 - rng.random::<f64>();
            if fire < q_spike {
                let magnitude = match shape {
                    Some(alpha) => spike * u.powf(-1.0 / alpha),
                    None => spike,
                };
                base + magnitude
            } else {
                base
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BehaviorKind {
    Ideal,
    GreedyClaimer,
    ChattyIdler,
    Misreporter,
}

impl BehaviorKind {
    pub fn name(self) -> &'static str {
        match self {
            BehaviorKind::Ideal => "ideal",
            BehaviorKind::GreedyClaimer => "greedy-claimer",
            BehaviorKind::ChattyIdler => "chatty-idler",
            BehaviorKind::Misreporter => "misreporter",
        }
    }
}

impl fmt::Display for BehaviorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BehaviorKind {
    type Err = ProfileError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ideal" => Ok(BehaviorKind::Ideal),
            "greedy-claimer" | "greedy" => Ok(BehaviorKind::GreedyClaimer),
            "chatty-idler" | "chatty" => Ok(BehaviorKind::ChattyIdler),
            "misreporter" => Ok(BehaviorKind::Misreporter),
            other => Err(ProfileError::UnknownBehavior(other.to_string())),
        }
    }
}

fn check_probability(name: &'static str, value: f64) -> Result<(), ProfileError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ProfileError::Probability { name, value })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentProfile {
    pub behavior: BehaviorKind,
    pub latency: LatencyModel,
    /// Chance of a status message on a round with nothing productive to do.
    pub chattiness: f64,
    /// Chance that a misreporter's edit is wrong (it completes regardless).
    pub misreport_prob: f64,
    /// Chance that a greedy claimer with nothing to claim writes a blocked
    /// task's file ahead of its dependencies.
    pub prewrite_prob: f64,
    /// Latency multiplier for rounds in which the agent only talks or waits.
    pub idle_latency_scale: f64,
    pub tokens_per_observation: u32,
    pub tokens_per_edit: u32,
    pub tokens_per_message: u32,
    /// Cost of claim, complete, run-tests and idle replies.
    pub tokens_per_control: u32,
}

impl Default for AgentProfile {
    fn default() -> Self {
        Self {
            behavior: BehaviorKind::Ideal,
            latency: LatencyModel::Constant { seconds: 1.0 },
            chattiness: 0.0,
            misreport_prob: 0.0,
            prewrite_prob: 0.0,
            idle_latency_scale: 1.0,
            tokens_per_observation: 150,
            tokens_per_edit: 250,
            tokens_per_message: 40,
            tokens_per_control: 10,
        }
    }
}

impl AgentProfile {
    pub fn ideal(latency: LatencyModel) -> Self {
        Self { latency, ..Self::default() }
    }

    pub fn with_behavior(mut self, behavior: BehaviorKind) -> Self {
        self.behavior = behavior;
        self
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        check_probability("chattiness", self.chattiness)?;
        check_probability("misreport_prob", self.misreport_prob)?;
        check_probability("prewrite_prob", self.prewrite_prob)?;
        if !(self.idle_latency_scale > 0.0 && self.idle_latency_scale.is_finite()) {
            return Err(ProfileError::IdleScale(self.idle_latency_scale));
        }
        self.latency.validate()
    }
}

/// System messages returned to an agent at the start of the next round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Feedback {
    ClaimDenied { task: TaskId, holder: Option<usize> },
    LockDenied { path: String, holder: usize },
    CompleteDenied { task: TaskId },
    Tests { failed: usize, failing: Vec<TaskId> },
}

pub struct Observation<'a> {
    pub round: u32,
    pub agent: usize,
    pub graph: &'a TaskGraph,
    /// Ledger as of round start; other agents' actions this round are not visible.
    pub ledger: &'a TaskLedger,
    /// Present only in preassigned runs.
    pub assignment: Option<&'a [TaskId]>,
    /// Stale-claim threshold of a decentralized run.
    pub reclaim_after: Option<u32>,
    pub feedback: &'a [Feedback],
    /// File status of every task this agent currently has claimed.
    pub self_check: &'a BTreeMap<TaskId, FileCheck>,
}

/// Agent-local memory carried across rounds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AgentState {
    pub prewritten: BTreeSet<TaskId>,
}

fn edit(graph: &TaskGraph, task: TaskId, correct: bool) -> AgentAction {
    AgentAction::Edit { path: graph.path_of(task), task, correct }
}

fn edit_is_correct<R: Rng + ?Sized>(profile: &AgentProfile, rng: &mut R) -> bool {
    match profile.behavior {
        BehaviorKind::Misreporter => rng.random::<f64>() >= profile.misreport_prob,
        _ => true,
    }
}

fn deps_done(graph: &TaskGraph, ledger: &TaskLedger, task: TaskId) -> bool {
    graph.deps(task).iter().all(|d| ledger.status(*d) == TaskStatus::Done)
}

/// Returns the agent's actions for this round, in execution order.
///
/// Lifecycle of a task: claim and edit in one round, then run tests and
/// complete in a later round once the self-check shows the file intact.
/// Ideal agents redo the edit when the self-check fails; misreporters only
/// redo it when the file is missing. A chatty agent denied a claim or lock in
/// the previous round may add a message to whatever it does next.
pub fn decide<R: Rng + ?Sized>(
    profile: &AgentProfile,
    state: &mut AgentState,
    obs: &Observation<'_>,
    rng: &mut R,
) -> Vec<AgentAction> {
    let denied = obs
        .feedback
        .iter()
        .any(|f| matches!(f, Feedback::ClaimDenied { .. } | Feedback::LockDenied { .. }));
    // A collision gets talked about: coordination chatter on top of the work.
    let chatter = denied && profile.chattiness > 0.0 && rng.random::<f64>() < profile.chattiness;
    let mut actions = choose(profile, state, obs, rng);
    if chatter && !actions.iter().any(|a| matches!(a, AgentAction::Message { .. })) {
        actions.insert(0, message(profile));
    }
    actions
}

fn message(profile: &AgentProfile) -> AgentAction {
    AgentAction::Message { tokens: profile.tokens_per_message.max(1) }
}

fn choose<R: Rng + ?Sized>(
    profile: &AgentProfile,
    state: &mut AgentState,
    obs: &Observation<'_>,
    rng: &mut R,
) -> Vec<AgentAction> {
    let graph = obs.graph;
    let ledger = obs.ledger;

    if let Some(task) = ledger.in_progress_of(obs.agent).next() {
        let check = obs.self_check.get(&task).copied().unwrap_or(FileCheck::Missing);
        let redo = match profile.behavior {
            BehaviorKind::Misreporter => check == FileCheck::Missing,
            _ => check != FileCheck::Passing,
        };
        return if redo {
            let correct = edit_is_correct(profile, rng);
            vec![edit(graph, task, correct)]
        } else {
            vec![AgentAction::RunTests, AgentAction::Complete { task }]
        };
    }

    let candidates: Vec<TaskId> = match obs.assignment {
        Some(owned) => owned
            .iter()
            .copied()
            .filter(|&t| ledger.status(t) == TaskStatus::Unclaimed && deps_done(graph, ledger, t))
            .collect(),
        None => graph
            .ids()
            .filter(|&t| ledger.status(t) == TaskStatus::Unclaimed && deps_done(graph, ledger, t))
            .collect(),
    };

    let pick = if candidates.is_empty() {
        None
    } else if profile.behavior == BehaviorKind::GreedyClaimer {
        Some(candidates[rng.random_range(0..candidates.len())])
    } else {
        candidates.iter().min().copied()
    };

    if let Some(task) = pick {
        let correct = edit_is_correct(profile, rng);
        return vec![AgentAction::Claim { task }, edit(graph, task, correct)];
    }

    if profile.behavior == BehaviorKind::GreedyClaimer && obs.assignment.is_none() {
        // Re-implement a teammate's task that looks stalled.
        if let Some(after) = obs.reclaim_after {
            let stalled = graph.ids().find(|&t| {
                let e = ledger.entry(t);
                e.status == TaskStatus::Claimed
                    && e.owner != Some(obs.agent)
                    && e.last_progress.is_some_and(|p| obs.round.saturating_sub(p) >= after)
            });
            if let Some(task) = stalled {
                return vec![edit(graph, task, true)];
            }
        }
        // Write a blocked task ahead of its dependencies.
        if profile.prewrite_prob > 0.0 && rng.random::<f64>() < profile.prewrite_prob {
            let blocked = graph.ids().find(|&t| {
                ledger.status(t) == TaskStatus::Unclaimed
                    && !deps_done(graph, ledger, t)
                    && !state.prewritten.contains(&t)
            });
            if let Some(task) = blocked {
                state.prewritten.insert(task);
                return vec![edit(graph, task, true)];
            }
        }
    }

    if profile.chattiness > 0.0 && rng.random::<f64>() < profile.chattiness {
        vec![message(profile)]
    } else {
        vec![AgentAction::Idle]
    }
}

/// Tokens consumed by one agent-round: the observation plus each action.
pub fn action_tokens(profile: &AgentProfile, actions: &[AgentAction]) -> u64 {
    let per_action: u64 = actions
        .iter()
        .map(|a| match a {
            AgentAction::Edit { .. } => u64::from(profile.tokens_per_edit),
            AgentAction::Message { tokens } => u64::from(*tokens),
            AgentAction::Claim { .. } | AgentAction::Complete { .. } | AgentAction::RunTests | AgentAction::Idle => {
                u64::from(profile.tokens_per_control)
            }
        })
        .sum();
    u64::from(profile.tokens_per_observation) + per_action
}
