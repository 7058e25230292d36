use serde::{Deserialize, Serialize};

use crate::taskgraph::TaskId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Unclaimed,
    Claimed,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub status: TaskStatus,
    pub owner: Option<usize>,
    pub claim_round: Option<u32>,
    pub done_round: Option<u32>,
    /// Last round the owner claimed or edited the task.
    pub last_progress: Option<u32>,
}

impl LedgerEntry {
    fn unclaimed() -> Self {
        Self { status: TaskStatus::Unclaimed, owner: None, claim_round: None, done_round: None, last_progress: None }
    }
}

/// Authoritative status and owner of every task, indexed by id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskLedger {
    entries: Vec<LedgerEntry>,
}

impl TaskLedger {
    pub fn new(tasks: usize) -> Self {
        Self { entries: vec![LedgerEntry::unclaimed(); tasks] }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, task: TaskId) -> &LedgerEntry {
        &self.entries[task.index()]
    }

    pub fn status(&self, task: TaskId) -> TaskStatus {
        self.entry(task).status
    }

    pub fn owner(&self, task: TaskId) -> Option<usize> {
        self.entry(task).owner
    }

    pub fn done_count(&self) -> usize {
        self.entries.iter().filter(|e| e.status == TaskStatus::Done).count()
    }

    pub fn all_done(&self) -> bool {
        self.done_count() == self.entries.len()
    }

    fn ids_where<'a>(&'a self, pred: impl Fn(&LedgerEntry) -> bool + 'a) -> impl Iterator<Item = TaskId> + 'a {
        self.entries
            .iter()
            .enumerate()
            .filter(move |(_, e)| pred(e))
            .map(|(i, _)| TaskId(i as u32 + 1))
    }

    /// Tasks `agent` has claimed but not finished, lowest id first.
    pub fn in_progress_of(&self, agent: usize) -> impl Iterator<Item = TaskId> + '_ {
        self.ids_where(move |e| e.status == TaskStatus::Claimed && e.owner == Some(agent))
    }

    pub fn done_ids(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.ids_where(|e| e.status == TaskStatus::Done)
    }

    pub fn claimed_ids(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.ids_where(|e| e.status == TaskStatus::Claimed)
    }

    /// Takes ownership of an unclaimed task. On failure returns the current
    /// owner, if any. Dependency gating is the caller's job.
    pub fn claim(&mut self, task: TaskId, agent: usize, round: u32) -> Result<(), Option<usize>> {
        let e = &mut self.entries[task.index()];
        if e.status != TaskStatus::Unclaimed {
            return Err(e.owner);
        }
        e.status = TaskStatus::Claimed;
        e.owner = Some(agent);
        e.claim_round = Some(round);
        e.last_progress = Some(round);
        Ok(())
    }

    /// Records owner progress on a claimed task; returns whether `agent` owns it.
    pub fn touch(&mut self, task: TaskId, agent: usize, round: u32) -> bool {
        let e = &mut self.entries[task.index()];
        if e.status == TaskStatus::Claimed && e.owner == Some(agent) {
            e.last_progress = Some(round);
            true
        } else {
            false
        }
    }

    /// Marks done if `agent` currently owns the claimed task.
    pub fn complete(&mut self, task: TaskId, agent: usize, round: u32) -> bool {
        let e = &mut self.entries[task.index()];
        if e.status == TaskStatus::Claimed && e.owner == Some(agent) {
            e.status = TaskStatus::Done;
            e.done_round = Some(round);
            true
        } else {
            false
        }
    }

    /// Reverts claims with no owner progress for more than `after` rounds.
    pub fn reclaim_stale(&mut self, round: u32, after: u32) -> Vec<(TaskId, usize)> {
        let mut out = Vec::new();
        for (i, e) in self.entries.iter_mut().enumerate() {
            if e.status != TaskStatus::Claimed {
                continue;
            }
            let last = e.last_progress.or(e.claim_round).unwrap_or(0);
            if round.saturating_sub(last) > after {
                out.push((TaskId(i as u32 + 1), e.owner.unwrap_or_default()));
                *e = LedgerEntry::unclaimed();
            }
        }
        out
    }
}
