//! Benchmark task DAGs: construction, validation, readiness and makespan bounds.
//!
//! Every benchmark graph has `M` unit-work tasks. Tasks `1..=C` form a single
//! dependency chain and the remaining `M - C` tasks are independent, where the
//! chain length is `C = round((1 - p) * M)` for parallel fraction `p`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of subtasks in every benchmark.
pub const BENCHMARK_TASKS: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("parallel fraction {0} is outside [0, 1]")]
    InvalidFraction(f64),
    #[error("graph must contain at least one task")]
    Empty,
    #[error("chain length {chain} is outside 1..={total}")]
    InvalidChain { chain: usize, total: usize },
    #[error("task ids must be exactly 1..={expected}; found {found} at position {position}")]
    BadIds { expected: usize, found: u32, position: usize },
    #[error("task {task} depends on unknown task {dep}")]
    UnknownDependency { task: TaskId, dep: TaskId },
    #[error("task {0} has zero work units")]
    ZeroWork(TaskId),
    #[error("dependency cycle through task {0}")]
    Cycle(TaskId),
    #[error("unknown task id {0}")]
    UnknownTask(TaskId),
    #[error("unknown benchmark '{0}' (expected mathutils, dataanalysis or svgrendering)")]
    UnknownBenchmark(String),
    #[error("unknown condition '{0}' (expected parallel, mixed or serial)")]
    UnknownCondition(String),
    #[error("malformed graph document: {0}")]
    Parse(String),
}

/// 1-based task identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub u32);

impl TaskId {
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn unit_work() -> u32 {
    1
}

fn is_unit(work: &u32) -> bool {
    *work == 1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub label: String,
    pub deps: BTreeSet<TaskId>,
    #[serde(default = "unit_work", skip_serializing_if = "is_unit")]
    pub work: u32,
}

/// The three benchmark domains. They share structure and differ only in labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Benchmark {
    MathUtils,
    DataAnalysis,
    SvgRendering,
}

impl Benchmark {
    pub const ALL: [Benchmark; 3] = [Benchmark::MathUtils, Benchmark::DataAnalysis, Benchmark::SvgRendering];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::MathUtils => "mathutils",
            Benchmark::DataAnalysis => "dataanalysis",
            Benchmark::SvgRendering => "svgrendering",
        }
    }

    fn labels(self) -> &'static [&'static str] {
        match self {
            Benchmark::MathUtils => &[
                "add", "safe_add", "sum_list", "mean", "variance", "std_dev", "z_scores", "normalize",
                "covariance", "correlation", "clamp", "is_prime", "gcd", "lcm", "factorial", "fibonacci",
                "median", "mode", "percentile", "round_to",
            ],
            Benchmark::DataAnalysis => &[
                "get_records", "remove_invalid", "add_revenue", "total_revenue", "revenue_by_region",
                "top_region", "region_share", "share_report", "format_report", "export_report",
                "filter_by_year", "group_by_product", "sort_by_price", "count_orders", "unique_customers",
                "max_quantity", "average_discount", "filter_returns", "rank_products", "monthly_totals",
            ],
            Benchmark::SvgRendering => &[
                "fmt_num", "fmt_coord", "fmt_points", "make_attr", "make_attrs", "make_tag",
                "make_group", "make_path", "make_polyline", "make_polygon", "make_rect", "make_circle",
                "make_line", "make_ellipse", "make_text", "make_svg", "make_style", "make_title",
                "make_comment", "make_defs",
            ],
        }
    }

    pub fn label(self, id: TaskId) -> String {
        self.labels()
            .get(id.index())
            .map(|s| s.to_string())
            .unwrap_or_else(|| format!("task_{}", id.0))
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mathutils" | "mathutils20" => Ok(Benchmark::MathUtils),
            "dataanalysis" => Ok(Benchmark::DataAnalysis),
            "svgrendering" => Ok(Benchmark::SvgRendering),
            other => Err(GraphError::UnknownBenchmark(other.to_string())),
        }
    }
}

/// Named dependency structures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Parallel,
    Mixed,
    Serial,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Parallel, Condition::Mixed, Condition::Serial];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Parallel => "parallel",
            Condition::Mixed => "mixed",
            Condition::Serial => "serial",
        }
    }

    pub fn parallel_fraction(self) -> f64 {
        match self {
            Condition::Parallel => 0.9,
            Condition::Mixed => 0.5,
            Condition::Serial => 0.2,
        }
    }

    pub fn dependency(self, total: usize) -> Result<DependencyCondition, GraphError> {
        DependencyCondition::new(self.parallel_fraction(), total)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "parallel" => Ok(Condition::Parallel),
            "mixed" => Ok(Condition::Mixed),
            "serial" => Ok(Condition::Serial),
            other => Err(GraphError::UnknownCondition(other.to_string())),
        }
    }
}

/// Parallel fraction `p`, chain length `C` and task count `M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependencyCondition {
    pub p: f64,
    pub chain: usize,
    pub total: usize,
}

impl DependencyCondition {
    pub fn new(p: f64, total: usize) -> Result<Self, GraphError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(GraphError::InvalidFraction(p));
        }
        if total == 0 {
            return Err(GraphError::Empty);
        }
        let chain = ((1.0 - p) * total as f64).round() as usize;
        Self::with_chain(p, chain, total)
    }

    pub fn with_chain(p: f64, chain: usize, total: usize) -> Result<Self, GraphError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(GraphError::InvalidFraction(p));
        }
        if total == 0 {
            return Err(GraphError::Empty);
        }
        if chain < 1 || chain > total {
            return Err(GraphError::InvalidChain { chain, total });
        }
        Ok(Self { p, chain, total })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskGraph {
    tasks: Vec<TaskSpec>,
}

#[derive(Deserialize)]
struct RawGraph {
    tasks: Vec<TaskSpec>,
}

impl TaskGraph {
    /// Validates ids, dependency references, work units and acyclicity.
    pub fn new(tasks: Vec<TaskSpec>) -> Result<Self, GraphError> {
        if tasks.is_empty() {
            return Err(GraphError::Empty);
        }
        let m = tasks.len();
        for (position, t) in tasks.iter().enumerate() {
            if t.id.0 as usize != position + 1 {
                return Err(GraphError::BadIds { expected: m, found: t.id.0, position });
            }
            if t.work == 0 {
                return Err(GraphError::ZeroWork(t.id));
            }
            for &d in &t.deps {
                if d.0 == 0 || d.0 as usize > m {
                    return Err(GraphError::UnknownDependency { task: t.id, dep: d });
                }
            }
        }
        let graph = Self { tasks };
        graph.check_acyclic()?;
        Ok(graph)
    }

    fn check_acyclic(&self) -> Result<(), GraphError> {
        // Kahn's algorithm over dependency edges.
        let m = self.tasks.len();
        let mut indegree: Vec<usize> = self.tasks.iter().map(|t| t.deps.len()).collect();
        let mut dependents = vec![Vec::new(); m];
        for t in &self.tasks {
            for d in &t.deps {
                dependents[d.index()].push(t.id.index());
            }
        }
        let mut queue: Vec<usize> = (0..m).filter(|&i| indegree[i] == 0).collect();
        let mut seen = 0;
        while let Some(i) = queue.pop() {
            seen += 1;
            for &j in &dependents[i] {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    queue.push(j);
                }
            }
        }
        if seen == m {
            Ok(())
        } else {
            let stuck = (0..m).find(|&i| indegree[i] > 0).unwrap_or(0);
            Err(GraphError::Cycle(self.tasks[stuck].id))
        }
    }

    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        let raw: RawGraph = serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
        Self::new(raw.tasks)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("task graph serializes")
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> &[TaskSpec] {
        &self.tasks
    }

    pub fn ids(&self) -> impl Iterator<Item = TaskId> + '_ {
        self.tasks.iter().map(|t| t.id)
    }

    pub fn contains(&self, id: TaskId) -> bool {
        id.0 >= 1 && id.0 as usize <= self.tasks.len()
    }

    pub fn task(&self, id: TaskId) -> Option<&TaskSpec> {
        if self.contains(id) {
            Some(&self.tasks[id.index()])
        } else {
            None
        }
    }

    pub fn deps(&self, id: TaskId) -> &BTreeSet<TaskId> {
        &self.tasks[id.index()].deps
    }

    /// All transitive dependencies of `id`.
    pub fn ancestors(&self, id: TaskId) -> BTreeSet<TaskId> {
        let mut out = BTreeSet::new();
        let mut stack: Vec<TaskId> = self.deps(id).iter().copied().collect();
        while let Some(d) = stack.pop() {
            if out.insert(d) {
                stack.extend(self.deps(d).iter().copied());
            }
        }
        out
    }

    /// Repository path of the file implementing `id`.
    pub fn path_of(&self, id: TaskId) -> String {
        format!("task_{:02}_{}.py", id.0, self.tasks[id.index()].label)
    }

    pub fn path_map(&self) -> BTreeMap<String, TaskId> {
        self.ids().map(|id| (self.path_of(id), id)).collect()
    }

    pub fn total_work(&self) -> u64 {
        self.tasks.iter().map(|t| u64::from(t.work)).sum()
    }

    /// Tasks with no dependencies and no dependents.
    pub fn isolated_count(&self) -> usize {
        let mut has_dependent = vec![false; self.len()];
        for t in &self.tasks {
            for d in &t.deps {
                has_dependent[d.index()] = true;
            }
        }
        self.tasks
            .iter()
            .filter(|t| t.deps.is_empty() && !has_dependent[t.id.index()])
            .count()
    }

    /// Ids not done, not claimed, whose dependencies are all done.
    pub fn ready_tasks(
        &self,
        done: &BTreeSet<TaskId>,
        claimed: &BTreeSet<TaskId>,
    ) -> Result<BTreeSet<TaskId>, GraphError> {
        if let Some(&bad) = done.iter().chain(claimed).find(|id| !self.contains(**id)) {
            return Err(GraphError::UnknownTask(bad));
        }
        Ok(self
            .tasks
            .iter()
            .filter(|t| !done.contains(&t.id) && !claimed.contains(&t.id) && t.deps.is_subset(done))
            .map(|t| t.id)
            .collect())
    }

    /// Longest dependency chain, weighted by work units.
    pub fn critical_path_length(&self) -> u64 {
        // Ids are not guaranteed to be topologically ordered for loaded graphs.
        let mut memo: Vec<Option<u64>> = vec![None; self.len()];
        (0..self.len()).map(|i| self.longest_ending_at(i, &mut memo)).max().unwrap_or(0)
    }

    fn longest_ending_at(&self, i: usize, memo: &mut Vec<Option<u64>>) -> u64 {
        if let Some(v) = memo[i] {
            return v;
        }
        let t = &self.tasks[i];
        let best_dep = t
            .deps
            .iter()
            .map(|d| self.longest_ending_at(d.index(), memo))
            .max()
            .unwrap_or(0);
        let v = best_dep + u64::from(t.work);
        memo[i] = Some(v);
        v
    }

    /// `max(critical path, ceil(total work / n_agents))`, in task units.
    pub fn makespan_lower_bound(&self, n_agents: usize) -> u64 {
        let n = n_agents.max(1) as u64;
        self.critical_path_length().max(self.total_work().div_ceil(n))
    }
}

/// Builds the benchmark graph: tasks `1..=C` chained, the rest independent.
pub fn build_benchmark(benchmark: Benchmark, cond: DependencyCondition) -> Result<TaskGraph, GraphError> {
    let cond = DependencyCondition::with_chain(cond.p, cond.chain, cond.total)?;
    let tasks = (1..=cond.total as u32)
        .map(|i| {
            let id = TaskId(i);
            let deps = if i >= 2 && i as usize <= cond.chain {
                BTreeSet::from([TaskId(i - 1)])
            } else {
                BTreeSet::new()
            };
            TaskSpec { id, label: benchmark.label(id), deps, work: 1 }
        })
        .collect();
    TaskGraph::new(tasks)
}
