mod common;

use evplace::cover::{CoverProblem, CoverSpec, Layout, LayoutFile};
use evplace::demand::{compute_weights, DemandMatrix, SlotClock};
use evplace::evaluation::{cross_evaluate, nearest_station_hops};
use evplace::grid::{build_network, build_scp_matrix, CellId, GridSpec};
use evplace::solvers::ga::crossover_with_pc;
use evplace::solvers::{chvatal_greedy, exact_solve, mutate, repair, run_ga_seeded, stochastic_chvatal, GaParams};
use evplace::trace::{reduce_records, RawRecord};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn grid_dims() -> impl Strategy<Value = (usize, usize)> {
    (1usize..=5, 1usize..=4)
}

/// A pruned instance built from random demand.
fn instance() -> impl Strategy<Value = (CoverProblem, DemandMatrix)> {
    (grid_dims(), 0usize..=3, any::<u64>()).prop_map(|((nx, ny), h, seed)| {
        let grid = GridSpec::new(0.0, 0.0, 0.5, nx, ny).unwrap();
        let net = build_network(grid).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let demand = random_demand(&mut rng, &grid, 3, 0.6);
        let spec = CoverSpec {
            h,
            ..Default::default()
        };
        (CoverProblem::from_demand(&demand, &net, &spec).unwrap(), demand)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hop_distance_is_bfs_distance((nx, ny) in (1usize..=9, 1usize..=9), a in 0usize..81, b in 0usize..81) {
        let grid = GridSpec::with_dims(nx, ny).unwrap();
        let net = build_network(grid).unwrap();
        let (a, b) = (a % grid.n_cells(), b % grid.n_cells());
        let d = bfs_hops(&grid, a);
        prop_assert_eq!(net.hop_distance(CellId(a), CellId(b)), d[b]);
        prop_assert_eq!(grid.hop_distance(CellId(a), CellId(b)), grid.hop_distance(CellId(b), CellId(a)));
        prop_assert!((grid.distance_km(CellId(a), CellId(b)) - d[b] as f64 * grid.cell_size).abs() < 1e-12);
    }

    #[test]
    fn coverage_sets_are_hop_balls((nx, ny) in grid_dims(), h in 0usize..5, c in 0usize..20) {
        let grid = GridSpec::with_dims(nx, ny).unwrap();
        let net = build_network(grid).unwrap();
        let c = c % grid.n_cells();
        let set = net.coverage_set(CellId(c), h).unwrap();
        let d = bfs_hops(&grid, c);
        let expected: Vec<CellId> = (0..grid.n_cells()).filter(|&z| d[z] <= h).map(CellId).collect();
        prop_assert_eq!(set, expected);
    }

    #[test]
    fn scp_matrix_is_symmetric_on_full_grids((nx, ny) in grid_dims(), h in 0usize..4) {
        let grid = GridSpec::with_dims(nx, ny).unwrap();
        let net = build_network(grid).unwrap();
        let cells: Vec<CellId> = (0..grid.n_cells()).map(CellId).collect();
        let m = build_scp_matrix(&net, h, &cells).unwrap();
        for i in 0..m.n_rows() {
            prop_assert!(m.get(i, i));
            for j in 0..m.n_cols() {
                prop_assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
    }

    #[test]
    fn weights_match_pairwise_sum((nx, ny) in grid_dims(), h in 0usize..4, seed: u64) {
        let grid = GridSpec::new(0.0, 0.0, 0.5, nx, ny).unwrap();
        let net = build_network(grid).unwrap();
        let demand = random_demand(&mut ChaCha8Rng::seed_from_u64(seed), &grid, 4, 0.5);
        let slots: Vec<u32> = (0..4).collect();
        let w = compute_weights(&demand, &net, h, 0.25, &slots).unwrap();
        let oracle = oracle_weights(&demand, &grid, h, 0.25);
        for (a, b) in w.w.iter().zip(&oracle) {
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
        }
        prop_assert!(w.w.iter().all(|&x| x <= 0.0));
    }

    #[test]
    fn demand_sum_is_order_free(seed: u64) {
        let grid = GridSpec::with_dims(4, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_demand(&mut rng, &grid, 5, 0.4);
        let b = random_demand(&mut rng, &grid, 5, 0.4);
        let mut ab = a.clone();
        ab.merge(&b).unwrap();
        let mut ba = b.clone();
        ba.merge(&a).unwrap();
        prop_assert_eq!(&ab, &ba);
        prop_assert_eq!(ab.total(), a.total() + b.total());
    }

    #[test]
    fn demand_csv_round_trip(seed: u64) {
        let grid = GridSpec::with_dims(5, 3).unwrap();
        let m = random_demand(&mut ChaCha8Rng::seed_from_u64(seed), &grid, 6, 0.5);
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        prop_assert_eq!(DemandMatrix::read_csv(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn stays_partition_records(cells in prop::collection::vec(0usize..4, 1..40), gaps in prop::collection::vec(0i64..500, 40)) {
        let mut t = 0;
        let recs: Vec<RawRecord> = cells.iter().zip(&gaps).map(|(&c, &g)| {
            t += g;
            RawRecord { user_id: "u".into(), timestamp: t, cell: CellId(c) }
        }).collect();
        let stays = reduce_records(&recs).unwrap();
        prop_assert!(stays.windows(2).all(|w| w[0].cell != w[1].cell && w[0].t_end <= w[1].t_start));
        prop_assert_eq!(stays[0].t_start, recs[0].timestamp);
        prop_assert_eq!(stays.last().unwrap().t_end, recs.last().unwrap().timestamp);
        let runs = 1 + cells.windows(2).filter(|w| w[0] != w[1]).count();
        prop_assert_eq!(stays.len(), runs);
    }

    #[test]
    fn redundancy_removal_gives_irredundant_fixpoint((p, _) in instance(), bits in prop::collection::vec(any::<bool>(), 20)) {
        let x = Layout::from_bits((0..p.n_cols()).map(|i| bits[i % bits.len()]).collect());
        let x = if p.is_feasible(&x) { x } else { Layout::ones(p.n_cols()) };
        let y = p.remove_redundant(&x).unwrap();
        prop_assert!(oracle_irredundant(&p, &y));
        prop_assert!(y.selected().all(|i| x.get(i)));
        prop_assert_eq!(p.remove_redundant(&y).unwrap(), y);
    }

    #[test]
    fn solver_outputs_are_irredundant_and_ordered((p, _) in instance(), seed: u64) {
        let g = chvatal_greedy(&p).unwrap();
        let s = stochastic_chvatal(&p, 3, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let one = stochastic_chvatal(&p, 1, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        prop_assert!(oracle_irredundant(&p, &g));
        prop_assert!(oracle_irredundant(&p, &s));
        prop_assert_eq!(&one, &g);
        let e = exact_solve(&p).unwrap();
        prop_assert!(oracle_irredundant(&p, &e));
        let (eo, go) = (p.objective(&e).unwrap(), p.objective(&g).unwrap());
        prop_assert!(eo <= go + 1e-9);
        prop_assert!(go <= 0.0);
        if p.n_cols() <= 12 {
            let (bo, _) = brute_force_best(&p);
            prop_assert!((bo - eo).abs() <= 1e-9 * (1.0 + bo.abs()));
        }
    }

    #[test]
    fn repair_always_gives_irredundant_cover((p, _) in instance(), bits in prop::collection::vec(any::<bool>(), 20)) {
        let x = Layout::from_bits((0..p.n_cols()).map(|i| bits[i % bits.len()]).collect());
        let y = repair(&p, &x);
        prop_assert!(oracle_irredundant(&p, &y));
        prop_assert_eq!(repair(&p, &y), y);
    }

    #[test]
    fn ga_never_loses_its_best((p, _) in instance(), seed: u64) {
        let params = GaParams { population_size: 8, iterations: 60, seed, ..Default::default() };
        let run = run_ga_seeded(&p, &params).unwrap();
        prop_assert!(run.best().objective <= run.initial.min_objective());
        prop_assert!(run.best_history.windows(2).all(|w| w[1] <= w[0]));
        for m in run.population.members() {
            prop_assert!(oracle_irredundant(&p, &m.layout));
        }
    }

    #[test]
    fn crossover_keeps_agreeing_bits(a in prop::collection::vec(any::<bool>(), 1..40), b_seed: u64, pc in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(b_seed);
        let b: Vec<bool> = a.iter().map(|&x| if rand::Rng::random_bool(&mut rng, 0.5) { x } else { !x }).collect();
        let (v1, v2) = (Layout::from_bits(a), Layout::from_bits(b));
        let child = crossover_with_pc(&v1, &v2, pc, &mut rng);
        for i in 0..v1.len() {
            prop_assert!(child.get(i) == v1.get(i) || child.get(i) == v2.get(i));
        }
        let m = mutate(&child, &v1, &v2, &mut rng);
        let changed: Vec<usize> = (0..m.len()).filter(|&i| m.get(i) != child.get(i)).collect();
        let shared = (0..v1.len()).filter(|&i| v1.get(i) == v2.get(i)).count();
        prop_assert_eq!(changed.len(), usize::from(shared > 0));
        for i in changed {
            prop_assert_eq!(v1.get(i), v2.get(i));
        }
    }

    #[test]
    fn capacitated_feasibility_matches_duplication((nx, ny) in (1usize..=3, 1usize..=3), h in 0usize..3, seed: u64) {
        let grid = GridSpec::with_dims(nx, ny).unwrap();
        let net = build_network(grid).unwrap();
        let cells: Vec<CellId> = (0..grid.n_cells()).map(CellId).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k: Vec<u32> = cells.iter().map(|&c| {
            let reach = net.coverage_set(c, h).unwrap().len() as u32;
            rand::Rng::random_range(&mut rng, 1..=reach.min(3))
        }).collect();
        let p = CoverProblem::on_cells(&net, h, &cells, vec![-1.0; cells.len()], k).unwrap();
        let d = p.duplicate_for_capacity();
        for mask in 0u32..(1 << cells.len()) {
            let x = Layout::from_bits((0..cells.len()).map(|i| mask >> i & 1 == 1).collect());
            prop_assert_eq!(p.is_feasible(&x), d.is_feasible(&x));
            prop_assert_eq!(p.is_feasible(&x), oracle_feasible(&p, &x));
        }
    }

    #[test]
    fn metrics_properties((p, demand) in instance(), extra in 0usize..20, factor in 1u64..6) {
        let x = chvatal_greedy(&p).unwrap();
        let m = cross_evaluate(&p, &x, &demand).unwrap();
        prop_assert!(m.avg_distance_km >= 0.0);
        prop_assert!(m.distance_variance_km2 >= 0.0);
        prop_assert_eq!(m.station_count, x.count());
        prop_assert_eq!(m.coverage_ratio, 1.0);
        let hops = nearest_station_hops(p.grid(), &p.stations(&x));
        for c in p.retained().cells() {
            prop_assert!(hops[c.0] as usize <= p.h());
        }
        let scaled = cross_evaluate(&p, &x, &demand.scaled(factor)).unwrap();
        prop_assert!((scaled.avg_distance_km - m.avg_distance_km).abs() < 1e-12);
        let mut y = x.clone();
        y.set(extra % p.n_cols(), true);
        let more = cross_evaluate(&p, &y, &demand).unwrap();
        prop_assert!(more.avg_distance_km <= m.avg_distance_km + 1e-12);
    }

    #[test]
    fn layout_file_round_trip((p, _) in instance()) {
        let x = chvatal_greedy(&p).unwrap();
        let f = LayoutFile::new(&p, &x).unwrap();
        let mut buf = Vec::new();
        f.write(&mut buf).unwrap();
        let back = LayoutFile::read(buf.as_slice()).unwrap();
        prop_assert_eq!(p.layout_from_cells(&back.stations).unwrap(), x);
    }
}

#[test]
fn slot_clock_covers_each_second_once() {
    let clock = SlotClock::new(1000, 600, 12).unwrap();
    for t in 1000..1000 + 600 * 12 {
        let s = clock.slot_of(t).unwrap();
        assert_eq!(s as i64, (t - 1000) / 600);
    }
    assert_eq!(clock.slot_of(999), None);
    assert_eq!(clock.slot_of(1000 + 600 * 12), None);
}
