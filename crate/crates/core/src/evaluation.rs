//! Demand-weighted distance metrics for station layouts, cross-period
//! evaluation, threshold sweeps and population comparisons.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cover::{CoverProblem, Layout};
use crate::demand::{DemandMatrix, SlotClock};
use crate::error::{Error, Result};
use crate::grid::{CellId, GridSpec};
use crate::solvers::Population;
use crate::trace::{build_demand, ArrivalParams, TraceLog};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayoutMetrics {
    pub avg_distance_km: f64,
    pub distance_variance_km2: f64,
    pub station_count: usize,
    pub objective: f64,
    /// Share of demand within `h` hops of a station.
    pub coverage_ratio: f64,
    pub total_demand: u64,
    pub h: usize,
    pub delta: f64,
    pub w0: f64,
}

/// Hop distance from every cell to its nearest station (L1 distance transform).
pub fn nearest_station_hops(grid: &GridSpec, stations: &[CellId]) -> Vec<u32> {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut d = vec![u32::MAX; nx * ny];
    for s in stations {
        d[s.0] = 0;
    }
    for r in 0..ny {
        for c in 0..nx {
            let i = r * nx + c;
            if r > 0 {
                d[i] = d[i].min(d[i - nx].saturating_add(1));
            }
            if c > 0 {
                d[i] = d[i].min(d[i - 1].saturating_add(1));
            }
        }
    }
    for r in (0..ny).rev() {
        for c in (0..nx).rev() {
            let i = r * nx + c;
            if r + 1 < ny {
                d[i] = d[i].min(d[i + nx].saturating_add(1));
            }
            if c + 1 < nx {
                d[i] = d[i].min(d[i + 1].saturating_add(1));
            }
        }
    }
    d
}

/// Metrics of `stations` against `demand`, with the cover parameters taken
/// from `problem` and the objective of `x` under it.
fn metrics_for(problem: &CoverProblem, x: &Layout, demand: &DemandMatrix) -> Result<LayoutMetrics> {
    let grid = problem.grid();
    if demand.n_cells() != grid.n_cells() {
        return Err(Error::DimensionMismatch {
            expected: grid.n_cells(),
            got: demand.n_cells(),
        });
    }
    let objective = problem.objective(x)?;
    let stations = problem.stations(x);
    if stations.is_empty() {
        return Err(Error::InfeasibleLayout);
    }
    let total = demand.total();
    if total == 0 {
        return Err(Error::EmptyProblem);
    }
    let hops = nearest_station_hops(grid, &stations);
    let totals = demand.cell_totals();
    let n = total as f64;
    let mut sum = 0.0;
    let mut covered = 0u64;
    for (cell, &count) in totals.iter().enumerate() {
        if count > 0 {
            sum += count as f64 * hops[cell] as f64 * grid.cell_size;
            if hops[cell] as usize <= problem.h() {
                covered += count;
            }
        }
    }
    let mean = sum / n;
    let var = totals
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(cell, &c)| {
            let d = hops[cell] as f64 * grid.cell_size - mean;
            c as f64 * d * d
        })
        .sum::<f64>()
        / n;
    Ok(LayoutMetrics {
        avg_distance_km: mean,
        distance_variance_km2: var,
        station_count: stations.len(),
        objective,
        coverage_ratio: covered as f64 / n,
        total_demand: total,
        h: problem.h(),
        delta: problem.delta(),
        w0: problem.w0(),
    })
}

/// Metrics of layout `x` against the demand the instance was built from.
pub fn layout_metrics(problem: &CoverProblem, x: &Layout, demand: &DemandMatrix) -> Result<LayoutMetrics> {
    if !problem.is_feasible(x) {
        return Err(Error::InfeasibleLayout);
    }
    metrics_for(problem, x, demand)
}

/// Metrics of layout `x` against demand from another period. Uncovered
/// demand lowers `coverage_ratio` instead of failing.
pub fn cross_evaluate(problem: &CoverProblem, x: &Layout, other: &DemandMatrix) -> Result<LayoutMetrics> {
    metrics_for(problem, x, other)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau_min_s: i64,
    pub l_min_km: f64,
    pub total_demand: u64,
    /// Empty when the thresholds leave no demand.
    pub avg_distance_km: Option<f64>,
    pub distance_variance_km2: Option<f64>,
    pub coverage_ratio: Option<f64>,
}

/// Rebuilds demand for every `(tau, l)` pair and evaluates `x` against it.
/// Rows are ordered by `tau` first, then `l`.
pub fn parameter_sweep(
    problem: &CoverProblem,
    x: &Layout,
    traces: &[TraceLog],
    clock: &SlotClock,
    tau_values: &[i64],
    l_values: &[f64],
) -> Result<Vec<SweepRow>> {
    if tau_values.is_empty() || l_values.is_empty() {
        return Err(Error::InvalidParameter("sweep value lists must be non-empty".into()));
    }
    let pairs: Vec<(i64, f64)> = tau_values
        .iter()
        .flat_map(|&t| l_values.iter().map(move |&l| (t, l)))
        .collect();
    pairs
        .par_iter()
        .map(|&(tau, l)| {
            let params = ArrivalParams {
                tau_min_s: tau,
                l_min_km: l,
            };
            let demand = build_demand(traces, problem.grid(), &params, clock)?;
            let m = match demand.total() {
                0 => None,
                _ => Some(cross_evaluate(problem, x, &demand)?),
            };
            Ok(SweepRow {
                tau_min_s: tau,
                l_min_km: l,
                total_demand: demand.total(),
                avg_distance_km: m.map(|m| m.avg_distance_km),
                distance_variance_km2: m.map(|m| m.distance_variance_km2),
                coverage_ratio: m.map(|m| m.coverage_ratio),
            })
        })
        .collect()
}

/// Seed population against evolved population, both as best-versus-best and
/// mean-versus-mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationComparison {
    pub seed_best_objective: f64,
    pub final_best_objective: f64,
    /// Average distance of the lowest-objective member.
    pub seed_best_avg_km: f64,
    pub final_best_avg_km: f64,
    pub seed_mean_avg_km: f64,
    pub final_mean_avg_km: f64,
    /// `1 - final / seed`.
    pub best_reduction: f64,
    pub mean_reduction: f64,
    pub seed_best_stations: usize,
    pub final_best_stations: usize,
}

fn population_avgs(problem: &CoverProblem, pop: &Population, demand: &DemandMatrix) -> Result<Vec<f64>> {
    pop.members()
        .par_iter()
        .map(|m| metrics_for(problem, &m.layout, demand).map(|r| r.avg_distance_km))
        .collect()
}

pub fn compare_populations(
    problem: &CoverProblem,
    seed: &Population,
    evolved: &Population,
    demand: &DemandMatrix,
) -> Result<PopulationComparison> {
    let (Some(sb), Some(fb)) = (seed.best_index(), evolved.best_index()) else {
        return Err(Error::PopulationTooSmall { size: 0, needed: 1 });
    };
    let sa = population_avgs(problem, seed, demand)?;
    let fa = population_avgs(problem, evolved, demand)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let reduction = |s: f64, f: f64| if s > 0.0 { 1.0 - f / s } else { 0.0 };
    Ok(PopulationComparison {
        seed_best_objective: seed.members()[sb].objective,
        final_best_objective: evolved.members()[fb].objective,
        seed_best_avg_km: sa[sb],
        final_best_avg_km: fa[fb],
        seed_mean_avg_km: mean(&sa),
        final_mean_avg_km: mean(&fa),
        best_reduction: reduction(sa[sb], fa[fb]),
        mean_reduction: reduction(mean(&sa), mean(&fa)),
        seed_best_stations: seed.members()[sb].layout.count(),
        final_best_stations: evolved.members()[fb].layout.count(),
    })
}

/// Writes serializable flat records as CSV with a header row.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
