//! Experiment matrices: personas, per-cell seeds, parallel execution and the
//! records / summary / pivot files.

pub mod summary;

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::hash::Hasher;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{AgentProfile, BaseLatency, BehaviorKind, LatencyModel, ProfileError};
use crate::orchestrator::{run, CoordinationScheme, RunConfig, RunError, RunRecord, DEFAULT_ROUND_CAP};
use crate::taskgraph::{build_benchmark, Benchmark, Condition, GraphError, TaskGraph};

pub use summary::{summarize, write_summary, write_table1, SummaryRow};

pub const DEFAULT_REPS: u32 = 5;
pub const DEFAULT_RETRIES: u32 = 2;
pub const TASKS_PER_BENCHMARK: usize = 20;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("cannot write to {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
    #[error("persona config: {0}")]
    Config(#[from] toml::de::Error),
    #[error("persona '{name}': {source}")]
    Persona { name: String, source: ProfileError },
    #[error("unknown persona '{0}'")]
    UnknownPersona(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("repetitions must be at least 1")]
    NoReps,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub name: String,
    pub profile: AgentProfile,
}

impl Persona {
    pub fn new(name: impl Into<String>, profile: AgentProfile) -> Self {
        Self { name: name.into(), profile }
    }
}

fn lognormal(median: f64, sigma: f64) -> LatencyModel {
    LatencyModel::LogNormal { mu: median.ln(), sigma }
}

/// Calibrated presets, one per behavior plus a heavy-tailed latency variant.
pub fn builtin_personas() -> Vec<Persona> {
    let base = AgentProfile::default();
    vec![
        Persona::new("ideal", AgentProfile::ideal(LatencyModel::Constant { seconds: 2.0 })),
        Persona::new(
            "greedy",
            AgentProfile {
                behavior: BehaviorKind::GreedyClaimer,
                latency: lognormal(2.0, 0.3),
                prewrite_prob: 0.3,
                ..base.clone()
            },
        ),
        Persona::new(
            "chatty",
            AgentProfile {
                behavior: BehaviorKind::ChattyIdler,
                latency: lognormal(2.0, 0.3),
                chattiness: 0.6,
                ..base.clone()
            },
        ),
        Persona::new(
            "misreporter",
            AgentProfile {
                behavior: BehaviorKind::Misreporter,
                latency: lognormal(2.0, 0.3),
                misreport_prob: 0.1,
                ..base.clone()
            },
        ),
        Persona::new(
            "heavy-tail",
            AgentProfile {
                latency: LatencyModel::HeavyTail {
                    base: BaseLatency::LogNormal { mu: 2.0f64.ln(), sigma: 0.25 },
                    spike: 1.5,
                    shape: Some(3.0),
                    q_spike: 0.08,
                },
                idle_latency_scale: 0.2,
                ..base
            },
        ),
    ]
}

#[derive(Debug, Deserialize)]
struct PersonaFile {
    #[serde(default)]
    personas: BTreeMap<String, AgentProfile>,
}

/// Parses a TOML document of `[personas.<name>]` tables. Omitted fields take
/// the defaults of [`AgentProfile`].
pub fn parse_personas(text: &str) -> Result<Vec<Persona>, ExperimentError> {
    let file: PersonaFile = toml::from_str(text)?;
    file.personas
        .into_iter()
        .map(|(name, profile)| match profile.validate() {
            Ok(()) => Ok(Persona { name, profile }),
            Err(source) => Err(ExperimentError::Persona { name, source }),
        })
        .collect()
}

/// Built-in presets overlaid by the config file's personas (same name wins).
pub fn resolve_personas(config: Option<&str>) -> Result<Vec<Persona>, ExperimentError> {
    let mut all = builtin_personas();
    if let Some(text) = config {
        for p in parse_personas(text)? {
            match all.iter_mut().find(|q| q.name == p.name) {
                Some(slot) => *slot = p,
                None => all.push(p),
            }
        }
    }
    Ok(all)
}

pub fn find_persona(all: &[Persona], name: &str) -> Result<Persona, ExperimentError> {
    all.iter().find(|p| p.name == name).cloned().ok_or_else(|| ExperimentError::UnknownPersona(name.into()))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub benchmark: Benchmark,
    pub condition: Condition,
    pub scheme: String,
    pub n_agents: usize,
    pub persona: String,
}

impl CellKey {
    pub fn label(&self) -> String {
        format!("{}/{}/{}/{}/{}", self.benchmark, self.condition, self.scheme, self.persona, self.n_agents)
    }
}

/// FNV-1a 64 of the cell label. Depends only on the cell itself, so adding
/// cells to a matrix never moves another cell's seeds.
pub fn cell_hash(key: &CellKey) -> u64 {
    let mut h = FnvHasher::default();
    h.write(key.label().as_bytes());
    h.finish()
}

/// `base_seed + hash(cell) + rep`, with retries offset by a large odd stride.
pub fn derive_seed(base_seed: u64, key: &CellKey, rep: u32, attempt: u32) -> u64 {
    base_seed
        .wrapping_add(cell_hash(key))
        .wrapping_add(u64::from(rep))
        .wrapping_add(u64::from(attempt).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentMatrix {
    pub benchmarks: Vec<Benchmark>,
    pub conditions: Vec<Condition>,
    pub schemes: Vec<CoordinationScheme>,
    pub agents: Vec<usize>,
    pub personas: Vec<Persona>,
    pub reps: u32,
    pub base_seed: u64,
    pub round_cap: u32,
    pub retries: u32,
    /// Replaces the generated benchmark graph in every cell when set.
    pub graph: Option<TaskGraph>,
}

impl Default for ExperimentMatrix {
    fn default() -> Self {
        Self {
            benchmarks: vec![Benchmark::MathUtils],
            conditions: Condition::ALL.to_vec(),
            schemes: vec![CoordinationScheme::Preassigned, CoordinationScheme::decentralized()],
            agents: (1..=5).collect(),
            personas: builtin_personas().into_iter().take(1).collect(),
            reps: DEFAULT_REPS,
            base_seed: 0,
            round_cap: DEFAULT_ROUND_CAP,
            retries: DEFAULT_RETRIES,
            graph: None,
        }
    }
}

/// One planned run.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub key: CellKey,
    pub rep: u32,
    pub config: RunConfig,
}

impl ExperimentMatrix {
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &benchmark in &self.benchmarks {
            for &condition in &self.conditions {
                for scheme in &self.schemes {
                    for persona in &self.personas {
                        for &n_agents in &self.agents {
                            out.push(CellKey {
                                benchmark,
                                condition,
                                scheme: scheme.name().into(),
                                n_agents,
                                persona: persona.name.clone(),
                            });
                        }
                    }
                }
            }
        }
        out
    }

    /// Every run in deterministic cell-then-repetition order.
    pub fn plan(&self) -> Result<Vec<RunSpec>, ExperimentError> {
        if self.reps == 0 {
            return Err(ExperimentError::NoReps);
        }
        let mut graphs = BTreeMap::new();
        let mut specs = Vec::new();
        for key in self.cells() {
            let graph = match &self.graph {
                Some(g) => g.clone(),
                None => match graphs.get(&(key.benchmark, key.condition)) {
                    Some(g) => TaskGraph::clone(g),
                    None => {
                        let g = build_benchmark(key.benchmark, key.condition.dependency(TASKS_PER_BENCHMARK)?)?;
                        graphs.insert((key.benchmark, key.condition), g.clone());
                        g
                    }
                },
            };
            let scheme = *self.schemes.iter().find(|s| s.name() == key.scheme).expect("scheme from matrix");
            let persona = self.personas.iter().find(|p| p.name == key.persona).expect("persona from matrix");
            for rep in 0..self.reps {
                let config = RunConfig {
                    benchmark: key.benchmark.name().into(),
                    condition: key.condition.name().into(),
                    p: key.condition.parallel_fraction(),
                    graph: graph.clone(),
                    scheme,
                    n_agents: key.n_agents,
                    persona: persona.name.clone(),
                    profile: persona.profile.clone(),
                    seed: derive_seed(self.base_seed, &key, rep, 0),
                    round_cap: self.round_cap,
                };
                specs.push(RunSpec { key: key.clone(), rep, config });
            }
        }
        Ok(specs)
    }
}

/// Runs `spec`, re-seeding up to `retries` times while the run misses the
/// round cap. Returns the last attempt.
pub fn run_with_retries(spec: &RunSpec, base_seed: u64, retries: u32) -> Result<RunRecord, RunError> {
    let mut config = spec.config.clone();
    let mut attempt = 0;
    loop {
        let mut record = run(&config)?;
        record.attempt = attempt;
        if record.success || attempt >= retries {
            return Ok(record);
        }
        attempt += 1;
        config.seed = derive_seed(base_seed, &spec.key, spec.rep, attempt);
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub key: CellKey,
    pub rep: u32,
    pub result: Result<RunRecord, RunError>,
}

/// Executes the plan on `jobs` worker threads; results keep plan order.
pub fn execute(matrix: &ExperimentMatrix, jobs: usize) -> Result<Vec<RunOutcome>, ExperimentError> {
    let plan = matrix.plan()?;
    let work = || -> Vec<RunOutcome> {
        plan.par_iter()
            .map(|spec| RunOutcome {
                key: spec.key.clone(),
                rep: spec.rep,
                result: run_with_retries(spec, matrix.base_seed, matrix.retries),
            })
            .collect()
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build();
    Ok(match pool {
        Ok(pool) => pool.install(work),
        Err(_) => work(),
    })
}

#[derive(Debug, Clone)]
pub struct MatrixOutput {
    pub records_path: PathBuf,
    pub summary_path: PathBuf,
    pub table1_path: PathBuf,
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
    /// Runs whose configuration was rejected; recorded, never fatal.
    pub errors: Vec<(CellKey, u32, RunError)>,
}

fn output_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Output { path: path.to_path_buf(), source }
}

pub fn write_records(path: &Path, records: &[RunRecord]) -> Result<(), ExperimentError> {
    let file = File::create(path).map_err(output_err(path))?;
    let mut out = BufWriter::new(file);
    for r in records {
        writeln!(out, "{}", r.to_json_line()).map_err(output_err(path))?;
    }
    out.flush().map_err(output_err(path))
}

pub fn read_records(text: &str) -> Result<Vec<RunRecord>, serde_json::Error> {
    text.lines().filter(|l| !l.trim().is_empty()).map(RunRecord::from_json).collect()
}

/// Runs the whole matrix and writes `records.jsonl`, `summary.csv` and
/// `table1.csv` under `out_dir`.
pub fn run_matrix(matrix: &ExperimentMatrix, out_dir: &Path, jobs: usize) -> Result<MatrixOutput, ExperimentError> {
    fs::create_dir_all(out_dir).map_err(output_err(out_dir))?;
    let records_path = out_dir.join("records.jsonl");
    let summary_path = out_dir.join("summary.csv");
    let table1_path = out_dir.join("table1.csv");
    // Fail before any simulation if the directory is not writable.
    File::create(&records_path).map_err(output_err(&records_path))?;

    let outcomes = execute(matrix, jobs)?;
    let mut records = Vec::with_capacity(outcomes.len());
    let mut errors = Vec::new();
    for o in outcomes {
        match o.result {
            Ok(r) => records.push(r),
            Err(e) => {
                log::warn!("run {} rep {} rejected: {e}", o.key.label(), o.rep);
                errors.push((o.key, o.rep, e));
            }
        }
    }
    write_records(&records_path, &records)?;
    let summary = summarize(&records);
    write_summary(&summary_path, &summary)?;
    write_table1(&table1_path, &summary, &matrix.agents)?;
    Ok(MatrixOutput { records_path, summary_path, table1_path, records, summary, errors })
}
