//! Solvers for the weighted covering problem.

pub mod exact;
pub mod ga;
pub mod greedy;

pub use exact::{exact_solve, for_each_irredundant, min_station_count, EXACT_MAX_COLS};
pub use ga::{
    binary_tournament, evolve, fusion_crossover, mutate, run_ga, run_ga_seeded, seed_population, CrossoverCost,
    GaParams, GaRun, Member, Population, SeedMethod,
};
pub use greedy::{chvatal_greedy, repair, stochastic_chvatal};
