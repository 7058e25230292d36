//! Shared repository state: file records, pessimistic locks, the test
//! verifier, and conflict detection over the write log.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::taskgraph::{TaskGraph, TaskId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorkspaceError {
    #[error("path '{0}' is not part of the benchmark")]
    UnknownPath(String),
    #[error("path '{path}' implements task {expected}, not task {got}")]
    TaskMismatch { path: String, expected: TaskId, got: TaskId },
}

/// Abstracted file content: which task it implements, who wrote it, and
/// whether it would pass that task's tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileState {
    pub path: String,
    pub implementing_task: TaskId,
    pub author: usize,
    pub written_round: u32,
    pub correct: bool,
    pub version: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LockOutcome {
    Granted,
    Denied { holder: usize },
}

/// Path -> holding agent. Locks live for one round.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LockTable {
    holders: BTreeMap<String, usize>,
}

impl LockTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn holder(&self, path: &str) -> Option<usize> {
        self.holders.get(path).copied()
    }

    /// Re-acquiring a lock already held by `agent` is granted.
    pub fn acquire(&mut self, path: &str, agent: usize) -> LockOutcome {
        match self.holders.get(path) {
            Some(&holder) if holder != agent => LockOutcome::Denied { holder },
            Some(_) => LockOutcome::Granted,
            None => {
                self.holders.insert(path.to_string(), agent);
                LockOutcome::Granted
            }
        }
    }

    pub fn release_all(&mut self) {
        self.holders.clear();
    }

    pub fn is_empty(&self) -> bool {
        self.holders.is_empty()
    }
}

pub fn acquire_lock(table: &mut LockTable, path: &str, agent: usize) -> LockOutcome {
    table.acquire(path, agent)
}

/// Result of checking one task's file in isolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileCheck {
    Missing,
    Failing,
    Passing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierReport {
    pub failed: usize,
    pub failing: Vec<TaskId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    paths: BTreeMap<String, TaskId>,
    files: BTreeMap<String, FileState>,
}

impl Workspace {
    pub fn new(graph: &TaskGraph) -> Self {
        Self { paths: graph.path_map(), files: BTreeMap::new() }
    }

    pub fn file(&self, path: &str) -> Option<&FileState> {
        self.files.get(path)
    }

    pub fn files(&self) -> impl Iterator<Item = &FileState> {
        self.files.values()
    }

    /// Writes a file. A second author writing the same path in the same
    /// round interleaves with the first write and leaves the file broken.
    pub fn apply_edit(
        &mut self,
        agent: usize,
        path: &str,
        task: TaskId,
        correct: bool,
        round: u32,
    ) -> Result<FileState, WorkspaceError> {
        let expected = *self.paths.get(path).ok_or_else(|| WorkspaceError::UnknownPath(path.to_string()))?;
        if expected != task {
            return Err(WorkspaceError::TaskMismatch { path: path.to_string(), expected, got: task });
        }
        let (version, torn) = match self.files.get(path) {
            Some(prev) => (prev.version + 1, prev.written_round == round && prev.author != agent),
            None => (1, false),
        };
        let state = FileState {
            path: path.to_string(),
            implementing_task: task,
            author: agent,
            written_round: round,
            correct: correct && !torn,
            version,
        };
        self.files.insert(path.to_string(), state.clone());
        Ok(state)
    }

    /// Places a file record directly, bypassing path validation.
    pub fn insert_file(&mut self, state: FileState) {
        self.files.insert(state.path.clone(), state);
    }

    pub fn remove_file(&mut self, path: &str) -> Option<FileState> {
        self.files.remove(path)
    }

    fn own_file_ok(&self, graph: &TaskGraph, task: TaskId) -> Option<bool> {
        self.files
            .get(&graph.path_of(task))
            .map(|f| f.correct && f.implementing_task == task)
    }

    /// Status of `task`'s own file, ignoring its dependencies.
    pub fn check_file(&self, graph: &TaskGraph, task: TaskId) -> FileCheck {
        match self.own_file_ok(graph, task) {
            None => FileCheck::Missing,
            Some(true) => FileCheck::Passing,
            Some(false) => FileCheck::Failing,
        }
    }

    /// Whether `task`'s test passes: its own file and every upstream file
    /// must exist, implement the right task, and be correct.
    pub fn task_passes(&self, graph: &TaskGraph, task: TaskId) -> bool {
        self.own_file_ok(graph, task) == Some(true)
            && graph.ancestors(task).into_iter().all(|a| self.own_file_ok(graph, a) == Some(true))
    }
}

/// Runs every test whose file exists. Tasks without a file are not counted.
pub fn run_verifier(ws: &Workspace, graph: &TaskGraph) -> VerifierReport {
    let failing: Vec<TaskId> = graph
        .ids()
        .filter(|&t| ws.file(&graph.path_of(t)).is_some() && !ws.task_passes(graph, t))
        .collect();
    VerifierReport { failed: failing.len(), failing }
}

/// One applied write, in global event order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteEvent {
    pub seq: u64,
    pub round: u32,
    pub agent: usize,
    pub path: String,
    pub task: TaskId,
    pub correct: bool,
    pub version: u32,
}

/// A task reaching `done`, in the same event order as writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionMark {
    pub seq: u64,
    pub task: TaskId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictKind {
    ConcurrentWrite,
    Rewrite,
    TemporalViolation,
}

impl ConflictKind {
    pub const ALL: [ConflictKind; 3] =
        [ConflictKind::ConcurrentWrite, ConflictKind::Rewrite, ConflictKind::TemporalViolation];

    pub fn name(self) -> &'static str {
        match self {
            ConflictKind::ConcurrentWrite => "concurrent_write",
            ConflictKind::Rewrite => "rewrite",
            ConflictKind::TemporalViolation => "temporal_violation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictEvent {
    pub kind: ConflictKind,
    pub round: u32,
    pub task: TaskId,
    pub agents: Vec<usize>,
    pub path: String,
}

/// Classifies the write log into the three consistency-conflict kinds.
///
/// * concurrent write: two or more distinct agents wrote one path in one round
///   (one event per path and round);
/// * rewrite: a write over a version authored by another agent in an earlier round;
/// * temporal violation: a write for a task some dependency of which had not
///   yet been completed when the write was applied.
pub fn detect_conflicts(writes: &[WriteEvent], completions: &[CompletionMark], graph: &TaskGraph) -> Vec<ConflictEvent> {
    let mut ordered: Vec<&WriteEvent> = writes.iter().collect();
    ordered.sort_by_key(|w| w.seq);
    let done_at: BTreeMap<TaskId, u64> = completions
        .iter()
        .fold(BTreeMap::new(), |mut m, c| {
            m.entry(c.task).and_modify(|s: &mut u64| *s = (*s).min(c.seq)).or_insert(c.seq);
            m
        });

    let mut out = Vec::new();
    let mut last: BTreeMap<&str, (usize, u32)> = BTreeMap::new();
    let mut same_round: BTreeMap<(u32, &str), BTreeSet<usize>> = BTreeMap::new();
    let mut reported: BTreeMap<(u32, &str), usize> = BTreeMap::new();

    for w in ordered {
        let path = w.path.as_str();
        if let Some(&(author, round)) = last.get(path) {
            if author != w.agent && round < w.round {
                out.push(ConflictEvent {
                    kind: ConflictKind::Rewrite,
                    round: w.round,
                    task: w.task,
                    agents: vec![author, w.agent],
                    path: w.path.clone(),
                });
            }
        }
        last.insert(path, (w.agent, w.round));

        let writers = same_round.entry((w.round, path)).or_default();
        writers.insert(w.agent);
        if writers.len() >= 2 {
            let agents: Vec<usize> = writers.iter().copied().collect();
            match reported.get(&(w.round, path)) {
                Some(&idx) => out[idx].agents = agents,
                None => {
                    reported.insert((w.round, path), out.len());
                    out.push(ConflictEvent {
                        kind: ConflictKind::ConcurrentWrite,
                        round: w.round,
                        task: w.task,
                        agents,
                        path: w.path.clone(),
                    });
                }
            }
        }

        if graph.contains(w.task) {
            let premature = graph
                .deps(w.task)
                .iter()
                .any(|d| done_at.get(d).is_none_or(|&s| s > w.seq));
            if premature {
                out.push(ConflictEvent {
                    kind: ConflictKind::TemporalViolation,
                    round: w.round,
                    task: w.task,
                    agents: vec![w.agent],
                    path: w.path.clone(),
                });
            }
        }
    }
    out
}
