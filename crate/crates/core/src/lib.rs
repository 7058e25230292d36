//! Deterministic round-based simulator for teams of coding agents sharing one
//! repository, with the speedup, overhead, conflict and straggler metrics used
//! to judge them.

pub mod agent;
pub mod experiment;
pub mod metrics;
pub mod orchestrator;
pub mod plot;
pub mod taskgraph;
pub mod workspace;

pub use agent::{AgentAction, AgentProfile, BehaviorKind, LatencyModel};
pub use metrics::Scalar;
pub use orchestrator::{run, CoordinationScheme, RunConfig, RunRecord};
pub use taskgraph::{build_benchmark, Benchmark, Condition, TaskGraph, TaskId};

pub type StatResult = metrics::stats::StatResult<f64>;
pub type StatResult32 = metrics::stats::StatResult<f32>;
