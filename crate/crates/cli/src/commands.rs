use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use evplace::cover::{CoverProblem, CoverSpec, Layout, LayoutFile};
use evplace::demand::{DemandMatrix, SlotClock};
use evplace::evaluation::{
    compare_populations, cross_evaluate, layout_metrics, parameter_sweep, write_csv, LayoutMetrics,
    PopulationComparison,
};
use evplace::grid::build_network;
use evplace::ingest::read_records;
use evplace::solvers::{chvatal_greedy, exact_solve, run_ga_seeded, stochastic_chvatal, GaRun, Population};
use evplace::synth::{generate, Ledger};
use evplace::trace::{build_demand, build_trace_logs, TraceLog};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{create_output_dir, require_input, RunConfig, SolverKind};

/// Identifies what produced an output file.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub library: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(cfg: &RunConfig, command: &str, seed: u64) -> Self {
        Provenance {
            tool: format!("evplace-cli {}", env!("CARGO_PKG_VERSION")),
            library: format!("evplace {}", evplace::VERSION),
            command: command.to_string(),
            config_sha256: cfg.hash(),
            seed,
        }
    }

    fn header(&self) -> Vec<u8> {
        format!(
            "# tool={}\n# library={}\n# command={}\n# config_sha256={}\n# seed={}\n",
            self.tool, self.library, self.command, self.config_sha256, self.seed
        )
        .into_bytes()
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_output_dir(dir)?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn csv_with_header<T: Serialize>(prov: &Provenance, rows: &[T]) -> Result<Vec<u8>> {
    let mut buf = prov.header();
    write_csv(rows, &mut buf)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut buf = serde_json::to_vec_pretty(value)?;
    buf.push(b'\n');
    Ok(buf)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn clock(cfg: &RunConfig) -> Result<SlotClock> {
    let p = &cfg.pipeline;
    Ok(SlotClock::for_days(p.study_start, p.slot_s, p.days)?)
}

pub fn generate_cmd(cfg: &RunConfig, traces: &Path, ledger: &Path) -> Result<()> {
    let grid = cfg.grid_spec()?;
    let synth = cfg.synth_config();
    let out = generate(&synth, &grid)?;
    let prov = Provenance::new(cfg, "generate", synth.seed);

    let mut buf = prov.header();
    out.write_traces(&mut buf)?;
    write_file(traces, &buf)?;
    let mut buf = prov.header();
    out.ledger.write(&mut buf)?;
    write_file(ledger, &buf)?;
    println!(
        "generated {} records for {} users, {} planted long trips -> {}",
        out.n_records(),
        out.users.len(),
        out.ledger.trips.len(),
        traces.display()
    );
    Ok(())
}

fn load_traces(cfg: &RunConfig, traces: &Path) -> Result<Vec<TraceLog>> {
    let grid = cfg.grid_spec()?;
    let (users, report) = read_records(open(traces)?, &grid, &cfg.ingest_options())?;
    if report.rejected() > 0 {
        log::warn!(
            "rejected {} of {} lines ({} malformed, {} outside the grid, {} outside the study window); first at lines {:?}",
            report.rejected(),
            report.data_lines,
            report.malformed,
            report.out_of_grid,
            report.out_of_window,
            report.first_rejected
        );
    }
    let logs = build_trace_logs(users, &cfg.trace_settings()?)?;
    log::info!("{} users, {} with a home", logs.len(), logs.iter().filter(|l| l.home.is_some()).count());
    Ok(logs)
}

pub fn demand_cmd(cfg: &RunConfig, traces: &Path, out: &Path, check_ledger: Option<&Path>) -> Result<()> {
    let grid = cfg.grid_spec()?;
    let logs = load_traces(cfg, traces)?;
    let clock = clock(cfg)?;
    let demand = build_demand(&logs, &grid, &cfg.arrival(), &clock)?;
    if demand.is_zero() {
        return Err(evplace::Error::EmptyProblem.into());
    }
    if let Some(path) = check_ledger {
        let expected = Ledger::read(open(path)?)?.demand(grid.n_cells(), clock)?;
        if expected != demand {
            bail!(
                "demand differs from the ledger: {} counted arrivals, {} planted",
                demand.total(),
                expected.total()
            );
        }
        println!("demand matches ledger {}", path.display());
    }
    let mut buf = Provenance::new(cfg, "demand", 0).header();
    demand.write_csv(&mut buf)?;
    write_file(out, &buf)?;
    let cells = demand.cell_totals().iter().filter(|&&c| c > 0).count();
    println!("{} arrivals in {} cells -> {}", demand.total(), cells, out.display());
    Ok(())
}

fn load_problem(cfg: &RunConfig, demand_path: &Path, h: usize, delta: f64) -> Result<(CoverProblem, DemandMatrix)> {
    let demand = DemandMatrix::read_csv(open(demand_path)?)?;
    let grid = cfg.grid_spec()?;
    if demand.n_cells() != grid.n_cells() {
        bail!(
            "{} has {} cells but the grid has {}",
            demand_path.display(),
            demand.n_cells(),
            grid.n_cells()
        );
    }
    let net = build_network(grid)?;
    let spec = CoverSpec {
        h,
        delta,
        w0_multiple: cfg.solver.w0_multiple,
        slots: None,
        capacity: cfg.pipeline.capacity,
    };
    Ok((CoverProblem::from_demand(&demand, &net, &spec)?, demand))
}

#[derive(Debug, Serialize)]
struct PopulationRow {
    phase: &'static str,
    objective: f64,
    avg_distance_km: f64,
    distance_variance_km2: f64,
    station_count: usize,
}

fn population_rows(
    problem: &CoverProblem,
    demand: &DemandMatrix,
    phase: &'static str,
    pop: &Population,
) -> Result<Vec<PopulationRow>> {
    pop.members()
        .par_iter()
        .map(|m| {
            let r = layout_metrics(problem, &m.layout, demand)?;
            Ok(PopulationRow {
                phase,
                objective: m.objective,
                avg_distance_km: r.avg_distance_km,
                distance_variance_km2: r.distance_variance_km2,
                station_count: r.station_count,
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct GaSummary {
    accepted: usize,
    rejected: usize,
    stalled: bool,
    initial_size: usize,
    comparison: PopulationComparison,
}

#[derive(Debug, Serialize)]
struct SolveReport {
    provenance: Provenance,
    solver: SolverKind,
    runs: usize,
    best_seed: u64,
    metrics: LayoutMetrics,
    ga: Option<GaSummary>,
}

pub fn solve_cmd(cfg: &RunConfig, demand_path: &Path, layout_path: &Path) -> Result<()> {
    let s = &cfg.solver;
    let (problem, demand) = load_problem(cfg, demand_path, s.h, cfg.pipeline.delta)?;
    log::info!("{} candidate cells, h = {}, w0 = {}", problem.n_cols(), problem.h(), problem.w0());
    let seeds: Vec<u64> = (0..s.runs as u64).map(|i| s.seed.wrapping_add(i)).collect();

    let (layout, best_seed, ga_run): (Layout, u64, Option<GaRun>) = match s.kind {
        SolverKind::Greedy => (chvatal_greedy(&problem)?, s.seed, None),
        SolverKind::Exact => (exact_solve(&problem)?, s.seed, None),
        SolverKind::Stochastic => {
            let results: Vec<(Layout, u64)> = seeds
                .par_iter()
                .map(|&seed| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    Ok((stochastic_chvatal(&problem, s.elite_k, &mut rng)?, seed))
                })
                .collect::<Result<_>>()?;
            let (x, seed) = best_by_objective(&problem, results, |r| &r.0)?;
            (x, seed, None)
        }
        SolverKind::Ga => {
            let results: Vec<(GaRun, u64)> = seeds
                .par_iter()
                .map(|&seed| Ok((run_ga_seeded(&problem, &cfg.ga_params(seed))?, seed)))
                .collect::<Result<_>>()?;
            let (run, seed) = best_by_objective(&problem, results, |r| &r.0.best().layout)?;
            (run.best().layout.clone(), seed, Some(run))
        }
    };

    let metrics = layout_metrics(&problem, &layout, &demand)?;
    let prov = Provenance::new(cfg, "solve", best_seed);
    let mut buf = prov.header();
    LayoutFile::new(&problem, &layout)?.write(&mut buf)?;
    write_file(layout_path, &buf)?;

    let dir = layout_path.parent().map(Path::to_path_buf).unwrap_or_default();
    write_file(&dir.join("metrics.csv"), &csv_with_header(&prov, &[metrics])?)?;
    let ga = match &ga_run {
        Some(run) => {
            let mut rows = population_rows(&problem, &demand, "initial", &run.initial)?;
            rows.extend(population_rows(&problem, &demand, "final", &run.population)?);
            write_file(&dir.join("population.csv"), &csv_with_header(&prov, &rows)?)?;
            Some(GaSummary {
                accepted: run.accepted,
                rejected: run.rejected,
                stalled: run.stalled,
                initial_size: run.initial.len(),
                comparison: compare_populations(&problem, &run.initial, &run.population, &demand)?,
            })
        }
        None => None,
    };
    let report = SolveReport {
        provenance: prov,
        solver: s.kind,
        runs: s.runs,
        best_seed,
        metrics,
        ga,
    };
    write_file(&dir.join("metrics.json"), &json_bytes(&report)?)?;
    println!(
        "{:?}: {} stations, objective {:.6}, avg distance {:.4} km -> {}",
        s.kind,
        metrics.station_count,
        metrics.objective,
        metrics.avg_distance_km,
        layout_path.display()
    );
    Ok(())
}

/// Lowest objective; ties keep the earliest entry.
fn best_by_objective<T>(problem: &CoverProblem, items: Vec<T>, layout: impl Fn(&T) -> &Layout) -> Result<T> {
    let mut best: Option<(f64, T)> = None;
    for item in items {
        let obj = problem.objective(layout(&item))?;
        if best.as_ref().is_none_or(|(b, _)| obj < *b) {
            best = Some((obj, item));
        }
    }
    best.map(|(_, t)| t).ok_or_else(|| anyhow!("no solver runs"))
}

fn load_layout(cfg: &RunConfig, demand_path: &Path, layout_path: &Path) -> Result<(CoverProblem, DemandMatrix, Layout)> {
    let file = LayoutFile::read(open(layout_path)?)?;
    let (problem, demand) = load_problem(cfg, demand_path, file.h, file.delta)?;
    if (problem.w0() - file.w0).abs() > 1e-9 * (1.0 + file.w0.abs()) {
        log::warn!(
            "layout was solved with w0 = {}, evaluating with w0 = {}",
            file.w0,
            problem.w0()
        );
    }
    let x = problem.layout_from_cells(&file.stations)?;
    Ok((problem, demand, x))
}

#[derive(Debug, Serialize)]
struct EvalRow {
    demand: String,
    avg_distance_km: f64,
    distance_variance_km2: f64,
    station_count: usize,
    objective: f64,
    coverage_ratio: f64,
    total_demand: u64,
    h: usize,
    delta: f64,
    w0: f64,
}

impl EvalRow {
    fn new(label: String, m: LayoutMetrics) -> Self {
        EvalRow {
            demand: label,
            avg_distance_km: m.avg_distance_km,
            distance_variance_km2: m.distance_variance_km2,
            station_count: m.station_count,
            objective: m.objective,
            coverage_ratio: m.coverage_ratio,
            total_demand: m.total_demand,
            h: m.h,
            delta: m.delta,
            w0: m.w0,
        }
    }
}

#[derive(Debug, Serialize)]
struct RecordsReport<'a, T> {
    provenance: Provenance,
    records: &'a [T],
}

pub fn evaluate_cmd(
    cfg: &RunConfig,
    demand_path: &Path,
    layout_path: &Path,
    against: &[PathBuf],
    out_dir: &Path,
) -> Result<()> {
    let (problem, demand, x) = load_layout(cfg, demand_path, layout_path)?;
    let mut rows = vec![EvalRow::new(
        demand_path.display().to_string(),
        layout_metrics(&problem, &x, &demand)?,
    )];
    for path in against {
        let other = DemandMatrix::read_csv(open(path)?)?;
        let m = cross_evaluate(&problem, &x, &other).with_context(|| format!("evaluating against {}", path.display()))?;
        rows.push(EvalRow::new(path.display().to_string(), m));
    }
    let prov = Provenance::new(cfg, "evaluate", cfg.solver.seed);
    write_file(&out_dir.join("evaluation.csv"), &csv_with_header(&prov, &rows)?)?;
    write_file(
        &out_dir.join("evaluation.json"),
        &json_bytes(&RecordsReport {
            provenance: prov,
            records: &rows,
        })?,
    )?;
    for r in &rows {
        println!(
            "{}: avg distance {:.4} km, variance {:.4} km^2, coverage {:.4}",
            r.demand, r.avg_distance_km, r.distance_variance_km2, r.coverage_ratio
        );
    }
    Ok(())
}

pub fn sweep_cmd(
    cfg: &RunConfig,
    traces: &Path,
    demand_path: &Path,
    layout_path: &Path,
    tau_values: &[i64],
    l_values: &[f64],
    out_dir: &Path,
) -> Result<()> {
    let (problem, _, x) = load_layout(cfg, demand_path, layout_path)?;
    let logs = load_traces(cfg, traces)?;
    let rows = parameter_sweep(&problem, &x, &logs, &clock(cfg)?, tau_values, l_values)?;
    let prov = Provenance::new(cfg, "sweep", cfg.solver.seed);
    write_file(&out_dir.join("sweep.csv"), &csv_with_header(&prov, &rows)?)?;
    write_file(
        &out_dir.join("sweep.json"),
        &json_bytes(&RecordsReport {
            provenance: prov,
            records: &rows,
        })?,
    )?;
    let mut stdout = std::io::stdout().lock();
    for r in &rows {
        writeln!(
            stdout,
            "tau_min={}s l_min={}km: demand {}, avg distance {}",
            r.tau_min_s,
            r.l_min_km,
            r.total_demand,
            r.avg_distance_km.map_or("n/a".to_string(), |d| format!("{d:.4} km"))
        )?;
    }
    Ok(())
}

/// Every path a command reads must exist before it starts.
pub fn require_inputs(paths: &[(&Path, &str)]) -> Result<()> {
    for (p, what) in paths {
        require_input(p, what)?;
    }
    Ok(())
}
