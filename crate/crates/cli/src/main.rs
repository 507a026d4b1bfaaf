mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use evplace::synth::Sampling;

use config::{config_error, create_output_dir, ConfigError, RunConfig, SolverKind};

#[derive(Debug, Parser)]
#[command(name = "evplace", version, about = "Charging-station placement from mobility traces")]
struct Cli {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory for outputs without an explicit path.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic traces and the ledger of planted long trips.
    Generate(GenerateArgs),
    /// Turn traces into a demand matrix.
    Demand(DemandArgs),
    /// Place stations for a demand matrix.
    Solve(SolveArgs),
    /// Evaluate a layout against one or more demand matrices.
    Evaluate(EvaluateArgs),
    /// Re-evaluate a layout over a grid of long-trip thresholds.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    days: Option<u32>,
    #[arg(long)]
    long_trip_rate: Option<f64>,
    #[arg(long, value_parser = parse_sampling)]
    sampling: Option<Sampling>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    traces: Option<PathBuf>,
    #[arg(long)]
    ledger: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DemandArgs {
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Output path.
    #[arg(long)]
    demand: Option<PathBuf>,
    #[arg(long)]
    tau_min: Option<i64>,
    #[arg(long)]
    l_min: Option<f64>,
    #[arg(long)]
    slot: Option<i64>,
    /// Fail unless the demand equals the ledger's planted arrivals.
    #[arg(long)]
    check_ledger: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    demand: Option<PathBuf>,
    /// Output path; metrics are written next to it.
    #[arg(long)]
    layout: Option<PathBuf>,
    #[arg(long, value_enum)]
    solver: Option<SolverKind>,
    #[arg(long)]
    h: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    w0_multiple: Option<f64>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    elite_k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    capacity: Option<u32>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    demand: Option<PathBuf>,
    #[arg(long)]
    layout: Option<PathBuf>,
    /// Further demand matrices, e.g. other days.
    #[arg(long)]
    against: Vec<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    traces: Option<PathBuf>,
    #[arg(long)]
    demand: Option<PathBuf>,
    #[arg(long)]
    layout: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', required = true)]
    tau_values: Vec<i64>,
    #[arg(long, value_delimiter = ',', required = true)]
    l_values: Vec<f64>,
}

fn parse_sampling(s: &str) -> std::result::Result<Sampling, String> {
    match s {
        "dense" => Ok(Sampling::Dense),
        "sparse" => Ok(Sampling::Sparse),
        _ => Err(format!("expected dense or sparse, got {s}")),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    set(&mut cfg.paths.output_dir, cli.out_dir);
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(config_error("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }

    match cli.command {
        Command::Generate(a) => {
            set(&mut cfg.synth.n_users, a.users);
            set(&mut cfg.pipeline.days, a.days);
            set(&mut cfg.synth.long_trip_rate, a.long_trip_rate);
            set(&mut cfg.synth.sampling, a.sampling);
            set(&mut cfg.synth.seed, a.seed);
            cfg.validate()?;
            let traces = a.traces.unwrap_or_else(|| cfg.traces_path());
            let ledger = a.ledger.unwrap_or_else(|| cfg.ledger_path());
            commands::generate_cmd(&cfg, &traces, &ledger)
        }
        Command::Demand(a) => {
            set(&mut cfg.pipeline.tau_min_s, a.tau_min);
            set(&mut cfg.pipeline.l_min_km, a.l_min);
            set(&mut cfg.pipeline.slot_s, a.slot);
            cfg.validate()?;
            let traces = a.traces.unwrap_or_else(|| cfg.traces_path());
            let out = a.demand.unwrap_or_else(|| cfg.demand_path());
            commands::require_inputs(&[(&traces, "trace file")])?;
            if let Some(l) = &a.check_ledger {
                commands::require_inputs(&[(l, "ledger file")])?;
            }
            commands::demand_cmd(&cfg, &traces, &out, a.check_ledger.as_deref())
        }
        Command::Solve(a) => {
            set(&mut cfg.solver.kind, a.solver);
            set(&mut cfg.solver.h, a.h);
            set(&mut cfg.pipeline.delta, a.delta);
            set(&mut cfg.solver.w0_multiple, a.w0_multiple);
            set(&mut cfg.solver.population, a.population);
            set(&mut cfg.solver.iterations, a.iterations);
            set(&mut cfg.solver.elite_k, a.elite_k);
            set(&mut cfg.solver.seed, a.seed);
            set(&mut cfg.solver.runs, a.runs);
            if a.capacity.is_some() {
                cfg.pipeline.capacity = a.capacity;
            }
            cfg.validate()?;
            let demand = a.demand.unwrap_or_else(|| cfg.demand_path());
            let layout = a.layout.unwrap_or_else(|| cfg.layout_path());
            commands::require_inputs(&[(&demand, "demand file")])?;
            commands::solve_cmd(&cfg, &demand, &layout)
        }
        Command::Evaluate(a) => {
            cfg.validate()?;
            let demand = a.demand.unwrap_or_else(|| cfg.demand_path());
            let layout = a.layout.unwrap_or_else(|| cfg.layout_path());
            commands::require_inputs(&[(&demand, "demand file"), (&layout, "layout file")])?;
            for p in &a.against {
                commands::require_inputs(&[(p, "demand file")])?;
            }
            let out_dir = cfg.paths.output_dir.clone();
            create_output_dir(&out_dir)?;
            commands::evaluate_cmd(&cfg, &demand, &layout, &a.against, &out_dir)
        }
        Command::Sweep(a) => {
            cfg.validate()?;
            let traces = a.traces.unwrap_or_else(|| cfg.traces_path());
            let demand = a.demand.unwrap_or_else(|| cfg.demand_path());
            let layout = a.layout.unwrap_or_else(|| cfg.layout_path());
            commands::require_inputs(&[
                (&traces, "trace file"),
                (&demand, "demand file"),
                (&layout, "layout file"),
            ])?;
            let out_dir = cfg.paths.output_dir.clone();
            create_output_dir(&out_dir)?;
            commands::sweep_cmd(&cfg, &traces, &demand, &layout, &a.tau_values, &a.l_values, &out_dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
