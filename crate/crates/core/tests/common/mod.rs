#![allow(dead_code)]

use std::collections::VecDeque;

use evplace::cover::{CoverProblem, CoverSpec, Layout};
use evplace::demand::{DemandMatrix, SlotClock};
use evplace::grid::{build_network, CellId, CellNetwork, GridSpec};
use evplace::synth::{generate, SynthConfig, SynthOutput};
use evplace::trace::{build_demand, build_trace_logs, TraceLog, TraceSettings};
use rand::Rng;

/// Hop distances from `src` by breadth-first search over 4-neighbours.
pub fn bfs_hops(grid: &GridSpec, src: usize) -> Vec<usize> {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut d = vec![usize::MAX; nx * ny];
    let mut q = VecDeque::from([src]);
    d[src] = 0;
    while let Some(c) = q.pop_front() {
        let (r, k) = (c / nx, c % nx);
        let mut next = Vec::new();
        if r > 0 {
            next.push(c - nx);
        }
        if r + 1 < ny {
            next.push(c + nx);
        }
        if k > 0 {
            next.push(c - 1);
        }
        if k + 1 < nx {
            next.push(c + 1);
        }
        for n in next {
            if d[n] == usize::MAX {
                d[n] = d[c] + 1;
                q.push_back(n);
            }
        }
    }
    d
}

/// Weights from the discomfort formula, summed pair by pair with BFS hops.
pub fn oracle_weights(demand: &DemandMatrix, grid: &GridSpec, h: usize, delta: f64) -> Vec<f64> {
    let n = grid.n_cells();
    let k = demand.n_slots() as f64;
    let totals = demand.cell_totals();
    (0..n)
        .map(|i| {
            let d = bfs_hops(grid, i);
            let mut w = 0.0;
            for z in 0..n {
                if d[z] <= h {
                    w += (d[z] as f64 - h as f64) * delta * totals[z] as f64;
                }
            }
            w / k
        })
        .collect()
}

/// Feasibility from first principles: every retained cell `i` has at least
/// `k_i` selected stations within `h` hops.
pub fn oracle_feasible(p: &CoverProblem, x: &Layout) -> bool {
    let grid = p.grid();
    let cells = p.retained().cells();
    (0..cells.len()).all(|i| {
        let near = x
            .selected()
            .filter(|&s| grid.hop_distance(cells[i], cells[s]) <= p.h())
            .count();
        near >= p.multiplicity()[i] as usize
    })
}

pub fn oracle_irredundant(p: &CoverProblem, x: &Layout) -> bool {
    oracle_feasible(p, x)
        && x.selected().all(|s| {
            let mut y = x.clone();
            y.set(s, false);
            !oracle_feasible(p, &y)
        })
}

/// Best irredundant cover by scanning every subset.
pub fn brute_force_best(p: &CoverProblem) -> (f64, usize) {
    let n = p.n_cols();
    assert!(n <= 16);
    let mut best = (f64::INFINITY, usize::MAX);
    for mask in 1u32..(1 << n) {
        let x = Layout::from_bits((0..n).map(|i| mask >> i & 1 == 1).collect());
        if oracle_irredundant(p, &x) {
            let obj = p.objective(&x).unwrap();
            if obj < best.0 - 1e-12 || ((obj - best.0).abs() <= 1e-12 && x.count() < best.1) {
                best = (obj, x.count());
            }
        }
    }
    best
}

/// Random demand on a random subset of cells.
pub fn random_demand<R: Rng>(rng: &mut R, grid: &GridSpec, n_slots: u32, fill: f64) -> DemandMatrix {
    let clock = SlotClock::new(0, 3600, n_slots).unwrap();
    let mut m = DemandMatrix::new(grid.n_cells(), clock);
    for c in 0..grid.n_cells() {
        if rng.random_bool(fill) {
            for _ in 0..rng.random_range(1..=3) {
                m.add(CellId(c), rng.random_range(0..n_slots), rng.random_range(1..=6)).unwrap();
            }
        }
    }
    if m.is_zero() {
        m.add(CellId(rng.random_range(0..grid.n_cells())), 0, 1).unwrap();
    }
    m
}

pub struct City {
    pub grid: GridSpec,
    pub net: CellNetwork,
    pub config: SynthConfig,
    pub output: SynthOutput,
    pub logs: Vec<TraceLog>,
    pub demand: DemandMatrix,
}

/// A 40x40 synthetic city with dense records and many long trips.
pub fn synthetic_city(seed: u64) -> City {
    let grid = GridSpec::new(0.0, 0.0, 0.5, 40, 40).unwrap();
    let config = SynthConfig {
        n_users: 2000,
        days: 7,
        long_trip_rate: 0.2,
        background: 0.5,
        seed,
        ..Default::default()
    };
    let output = generate(&config, &grid).unwrap();
    let logs = build_trace_logs(output.user_records(&grid).unwrap(), &TraceSettings::default()).unwrap();
    let demand = build_demand(&logs, &grid, &config.arrival, &config.clock().unwrap()).unwrap();
    City {
        net: build_network(grid).unwrap(),
        grid,
        config,
        output,
        logs,
        demand,
    }
}

pub fn city_problem(city: &City, h: usize, w0_multiple: f64) -> CoverProblem {
    let spec = CoverSpec {
        h,
        w0_multiple,
        ..Default::default()
    };
    CoverProblem::from_demand(&city.demand, &city.net, &spec).unwrap()
}
