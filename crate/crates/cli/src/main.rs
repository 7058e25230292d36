use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use teamsim::experiment::summary::read_summary;
use teamsim::experiment::{
    find_persona, resolve_personas, run_matrix, ExperimentMatrix, DEFAULT_REPS, DEFAULT_RETRIES, TASKS_PER_BENCHMARK,
};
use teamsim::orchestrator::{CoordinationScheme, DEFAULT_RECLAIM_AFTER, DEFAULT_ROUND_CAP};
use teamsim::plot::emit_plots;
use teamsim::{build_benchmark, Benchmark, Condition, TaskGraph};

#[derive(Parser)]
#[command(name = "teamsim", version, about = "Simulate and measure coordination in multi-agent coding teams")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment matrix and write records, summary, pivot and plots.
    Run(RunArgs),
    /// Print a benchmark dependency graph as JSON.
    Graph {
        #[arg(long, default_value = "mathutils")]
        benchmark: String,
        #[arg(long, default_value = "parallel")]
        condition: String,
    },
    /// Render plots from an existing summary file.
    Plot {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long, default_value = "results/plots")]
        out: PathBuf,
    },
    /// List the available personas as a TOML config.
    Personas {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Preassign,
    Decentralized,
    Both,
}

#[derive(Args)]
struct RunArgs {
    /// mathutils, dataanalysis, svgrendering or all
    #[arg(long, default_value = "mathutils")]
    benchmark: String,
    /// parallel, mixed, serial or all
    #[arg(long, default_value = "all")]
    condition: String,
    #[arg(long, value_enum, default_value = "both")]
    scheme: SchemeArg,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    agents: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Persona names, built in or from --config.
    #[arg(long, value_delimiter = ',', default_value = "ideal")]
    persona: Vec<String>,
    /// TOML file with [personas.<name>] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ROUND_CAP)]
    round_cap: u32,
    #[arg(long, default_value_t = DEFAULT_RETRIES)]
    retries: u32,
    #[arg(long, default_value_t = DEFAULT_RECLAIM_AFTER)]
    reclaim_after: u32,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Custom task graph JSON used in place of the generated benchmarks.
    #[arg(long)]
    graph: Option<PathBuf>,
}

fn read_config(path: Option<&PathBuf>) -> Result<Option<String>> {
    path.map(|p| fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))).transpose()
}

fn benchmarks(arg: &str) -> Result<Vec<Benchmark>> {
    if arg == "all" {
        return Ok(Benchmark::ALL.to_vec());
    }
    Ok(vec![arg.parse()?])
}

fn conditions(arg: &str) -> Result<Vec<Condition>> {
    if arg == "all" {
        return Ok(Condition::ALL.to_vec());
    }
    Ok(vec![arg.parse()?])
}

fn run(args: RunArgs) -> Result<()> {
    if args.agents.is_empty() || args.agents.contains(&0) {
        bail!("--agents needs team sizes of at least 1");
    }
    let config = read_config(args.config.as_ref())?;
    let all = resolve_personas(config.as_deref())?;
    let personas = args.persona.iter().map(|n| find_persona(&all, n)).collect::<Result<Vec<_>, _>>()?;
    let decentralized = CoordinationScheme::Decentralized { reclaim_after: args.reclaim_after };
    let schemes = match args.scheme {
        SchemeArg::Preassign => vec![CoordinationScheme::Preassigned],
        SchemeArg::Decentralized => vec![decentralized],
        SchemeArg::Both => vec![CoordinationScheme::Preassigned, decentralized],
    };
    let graph = match &args.graph {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(TaskGraph::from_json(&text)?)
        }
        None => None,
    };
    let matrix = ExperimentMatrix {
        benchmarks: benchmarks(&args.benchmark)?,
        conditions: conditions(&args.condition)?,
        schemes,
        agents: args.agents,
        personas,
        reps: args.reps,
        base_seed: args.seed,
        round_cap: args.round_cap,
        retries: args.retries,
        graph,
    };
    log::info!("running {} cells x {} reps on {} jobs", matrix.cells().len(), matrix.reps, args.jobs);
    let output = run_matrix(&matrix, &args.out, args.jobs)?;
    for (key, rep, err) in &output.errors {
        eprintln!("warning: {} rep {rep}: {err}", key.label());
    }
    let plots = emit_plots(&output.summary, &args.out.join("plots"))?;
    for w in &plots.warnings {
        eprintln!("warning: {w}");
    }
    println!("{} records -> {}", output.records.len(), output.records_path.display());
    println!("summary -> {}", output.summary_path.display());
    println!("table1 -> {}", output.table1_path.display());
    for f in &plots.files {
        println!("plot -> {}", f.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Graph { benchmark, condition } => {
            let b: Benchmark = benchmark.parse()?;
            let c: Condition = condition.parse()?;
            println!("{}", build_benchmark(b, c.dependency(TASKS_PER_BENCHMARK)?)?.to_json());
            Ok(())
        }
        Command::Plot { summary, out } => {
            let rows = read_summary(&summary)?;
            let plots = emit_plots(&rows, &out)?;
            for w in &plots.warnings {
                eprintln!("warning: {w}");
            }
            for f in &plots.files {
                println!("plot -> {}", f.display());
            }
            Ok(())
        }
        Command::Personas { config } => {
            let text = read_config(config.as_ref())?;
            let all = resolve_personas(text.as_deref())?;
            let table: BTreeMap<&str, BTreeMap<String, _>> =
                BTreeMap::from([("personas", all.into_iter().map(|p| (p.name, p.profile)).collect())]);
            print!("{}", toml::to_string(&table)?);
            Ok(())
        }
    }
}
