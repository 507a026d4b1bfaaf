//! Genetic search over feasible irredundant covers: tournament selection,
//! fusion crossover, shared-bit mutation, greedy repair and
//! replace-worse-than-average population update.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::greedy::{repair, stochastic_chvatal};
use crate::cover::{CoverProblem, Layout};
use crate::error::{Error, Result};

/// Consecutive duplicate draws tolerated per population slot before giving up.
pub const STALL_FACTOR: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedMethod {
    StochasticChvatal,
    RandomUniform,
}

/// How parent objectives become crossover costs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossoverCost {
    /// `objective - population minimum + eps`, so the fitter parent
    /// contributes more bits.
    Shifted,
    /// Raw objectives in `p_c = w2 / (w1 + w2)`, clamped to `[0, 1]`.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GaParams {
    pub population_size: usize,
    pub iterations: usize,
    pub elite_k: usize,
    pub tournament_size: usize,
    pub seed_method: SeedMethod,
    pub crossover_cost: CrossoverCost,
    pub seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        GaParams {
            population_size: 1000,
            iterations: 40_000,
            elite_k: 5,
            tournament_size: 2,
            seed_method: SeedMethod::StochasticChvatal,
            crossover_cost: CrossoverCost::Shifted,
            seed: 0,
        }
    }
}

impl GaParams {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::InvalidParameter("population size must be at least 2".into()));
        }
        if self.elite_k < 1 {
            return Err(Error::InvalidParameter("elite_k must be at least 1".into()));
        }
        if self.tournament_size < 2 {
            return Err(Error::InvalidParameter("tournament size must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub layout: Layout,
    pub objective: f64,
}

/// Distinct layouts with cached objectives.
#[derive(Debug, Clone, Default)]
pub struct Population {
    members: Vec<Member>,
    index: HashSet<Layout>,
}

impl Population {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a population from layouts, dropping duplicates.
    pub fn from_layouts(problem: &CoverProblem, layouts: impl IntoIterator<Item = Layout>) -> Result<Self> {
        let mut pop = Population::new();
        for x in layouts {
            let objective = problem.objective(&x)?;
            pop.insert(Member { layout: x, objective });
        }
        Ok(pop)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn contains(&self, x: &Layout) -> bool {
        self.index.contains(x)
    }

    /// Adds `m` unless its layout is already present.
    pub fn insert(&mut self, m: Member) -> bool {
        if !self.index.insert(m.layout.clone()) {
            return false;
        }
        self.members.push(m);
        true
    }

    fn replace(&mut self, i: usize, m: Member) {
        self.index.remove(&self.members[i].layout);
        self.index.insert(m.layout.clone());
        self.members[i] = m;
    }

    /// Index of the lowest objective (first on ties).
    pub fn best_index(&self) -> Option<usize> {
        (0..self.len()).min_by(|&a, &b| self.members[a].objective.total_cmp(&self.members[b].objective))
    }

    pub fn best(&self) -> Option<&Member> {
        self.best_index().map(|i| &self.members[i])
    }

    pub fn mean_objective(&self) -> f64 {
        self.members.iter().map(|m| m.objective).sum::<f64>() / self.len() as f64
    }

    pub fn min_objective(&self) -> f64 {
        self.members.iter().map(|m| m.objective).fold(f64::INFINITY, f64::min)
    }

    /// Index of the highest objective (first on ties).
    pub fn worst_index(&self) -> Option<usize> {
        (0..self.len()).max_by(|&a, &b| {
            self.members[a]
                .objective
                .total_cmp(&self.members[b].objective)
                .then(b.cmp(&a))
        })
    }
}

/// One random-uniform layout: columns are added in random order until every
/// row is covered, then redundant ones are removed worst weight first.
pub fn random_uniform_layout<R: Rng + ?Sized>(problem: &CoverProblem, rng: &mut R) -> Layout {
    let mut order: Vec<usize> = (0..problem.n_cols()).collect();
    order.shuffle(rng);
    let mut x = Layout::zeros(problem.n_cols());
    let mut counts = vec![0u32; problem.n_groups()];
    let required = problem.group_required();
    let mut open = required.iter().filter(|&&r| r > 0).count();
    for c in order {
        if open == 0 {
            break;
        }
        x.set(c, true);
        for &g in problem.col_groups(c) {
            let g = g as usize;
            counts[g] += 1;
            if counts[g] == required[g] {
                open -= 1;
            }
        }
    }
    problem.prune_with_counts(x, &mut counts)
}

/// Up to `m` distinct layouts drawn by `method`. Stops early, with a warning,
/// after `STALL_FACTOR * m` consecutive duplicate draws.
pub fn seed_population<R: Rng + ?Sized>(
    problem: &CoverProblem,
    m: usize,
    method: SeedMethod,
    elite_k: usize,
    rng: &mut R,
) -> Result<Population> {
    if m < 2 {
        return Err(Error::InvalidParameter("population size must be at least 2".into()));
    }
    let mut pop = Population::new();
    let mut misses = 0;
    while pop.len() < m {
        let x = match method {
            SeedMethod::StochasticChvatal => stochastic_chvatal(problem, elite_k, rng)?,
            SeedMethod::RandomUniform => random_uniform_layout(problem, rng),
        };
        let objective = problem.objective(&x)?;
        if pop.insert(Member { layout: x, objective }) {
            misses = 0;
        } else {
            misses += 1;
            if misses >= STALL_FACTOR * m {
                log::warn!("only {} distinct layouts found, {} requested", pop.len(), m);
                break;
            }
        }
    }
    Ok(pop)
}

fn tournament_pick<R: Rng + ?Sized>(pop: &Population, t: usize, rng: &mut R) -> usize {
    let t = t.min(pop.len());
    rand::seq::index::sample(rng, pop.len(), t)
        .into_iter()
        .min_by(|&a, &b| {
            pop.members[a]
                .objective
                .total_cmp(&pop.members[b].objective)
                .then(a.cmp(&b))
        })
        .expect("t >= 1")
}

/// Two parents, each the fittest of an independent random subset of size `t`.
pub fn binary_tournament<'a, R: Rng + ?Sized>(
    pop: &'a Population,
    t: usize,
    rng: &mut R,
) -> Result<(&'a Member, &'a Member)> {
    if pop.len() < 2 {
        return Err(Error::PopulationTooSmall { size: pop.len(), needed: 2 });
    }
    if t < 1 {
        return Err(Error::InvalidParameter("tournament size must be positive".into()));
    }
    let a = tournament_pick(pop, t, rng);
    let b = tournament_pick(pop, t, rng);
    Ok((&pop.members[a], &pop.members[b]))
}

/// Child keeping agreeing bits; each disagreeing bit comes from `v2` with
/// probability `1 - p_c`.
pub fn crossover_with_pc<R: Rng + ?Sized>(v1: &Layout, v2: &Layout, p_c: f64, rng: &mut R) -> Layout {
    let mut child = v1.clone();
    for i in 0..v1.len() {
        if v1.get(i) != v2.get(i) && rng.random::<f64>() > p_c {
            child.set(i, v2.get(i));
        }
    }
    child
}

/// Fusion crossover with positive costs: `p_c = c2 / (c1 + c2)`.
pub fn fusion_crossover<R: Rng + ?Sized>(v1: &Layout, v2: &Layout, c1: f64, c2: f64, rng: &mut R) -> Result<Layout> {
    if !(c1 > 0.0 && c2 > 0.0 && c1.is_finite() && c2.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "crossover costs must be positive, got {c1} and {c2}"
        )));
    }
    if v1.len() != v2.len() {
        return Err(Error::DimensionMismatch {
            expected: v1.len(),
            got: v2.len(),
        });
    }
    Ok(crossover_with_pc(v1, v2, c2 / (c1 + c2), rng))
}

/// Flips one uniformly chosen bit among the indices where the parents agree.
pub fn mutate<R: Rng + ?Sized>(child: &Layout, v1: &Layout, v2: &Layout, rng: &mut R) -> Layout {
    let shared: Vec<usize> = (0..v1.len()).filter(|&i| v1.get(i) == v2.get(i)).collect();
    let mut out = child.clone();
    if !shared.is_empty() {
        out.flip(shared[rng.random_range(0..shared.len())]);
    }
    out
}

/// `p_c` for two parents under the given cost rule.
pub fn crossover_probability(rule: CrossoverCost, o1: f64, o2: f64, floor: f64) -> f64 {
    match rule {
        CrossoverCost::Shifted => {
            let eps = if floor == 0.0 { 1e-9 } else { 1e-9 * floor.abs() };
            let c1 = o1 - floor + eps;
            let c2 = o2 - floor + eps;
            c2 / (c1 + c2)
        }
        CrossoverCost::Literal => {
            let p = o2 / (o1 + o2);
            if p.is_finite() {
                p.clamp(0.0, 1.0)
            } else {
                0.5
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct GaRun {
    pub initial: Population,
    pub population: Population,
    /// Best objective before the first child and after every accepted one.
    pub best_history: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    pub stalled: bool,
}

impl GaRun {
    pub fn best(&self) -> &Member {
        self.population.best().expect("populations are non-empty")
    }
}

/// Evolves `initial` until `params.iterations` children have been accepted.
pub fn evolve<R: Rng + ?Sized>(
    problem: &CoverProblem,
    params: &GaParams,
    initial: Population,
    rng: &mut R,
) -> Result<GaRun> {
    params.validate()?;
    if initial.is_empty() {
        return Err(Error::PopulationTooSmall { size: 0, needed: 1 });
    }
    let mut pop = initial.clone();
    let mut history = vec![pop.min_objective()];
    let (mut accepted, mut rejected, mut streak) = (0usize, 0usize, 0usize);
    let mut stalled = false;
    let stall_limit = STALL_FACTOR * params.population_size;

    if pop.len() < 2 && params.iterations > 0 {
        log::warn!("population of {} cannot evolve", pop.len());
        stalled = true;
    }
    while !stalled && accepted < params.iterations {
        let (p1, p2) = binary_tournament(&pop, params.tournament_size, rng)?;
        let p_c = crossover_probability(params.crossover_cost, p1.objective, p2.objective, pop.min_objective());
        let child = crossover_with_pc(&p1.layout, &p2.layout, p_c, rng);
        let child = mutate(&child, &p1.layout, &p2.layout, rng);
        let child = repair(problem, &child);

        if pop.contains(&child) {
            rejected += 1;
            streak += 1;
            if streak >= stall_limit {
                log::warn!("stopping after {streak} consecutive duplicate children");
                stalled = true;
            }
            continue;
        }
        streak = 0;

        let objective = problem.objective(&child)?;
        let mean = pop.mean_objective();
        let floor = pop.min_objective();
        let worse: Vec<usize> = (0..pop.len())
            .filter(|&i| {
                let o = pop.members[i].objective;
                o > mean && o > floor
            })
            .collect();
        let slot = if worse.is_empty() {
            pop.worst_index().expect("non-empty")
        } else {
            worse[rng.random_range(0..worse.len())]
        };
        pop.replace(slot, Member { layout: child, objective });
        accepted += 1;
        history.push(pop.min_objective());
    }

    Ok(GaRun {
        initial,
        population: pop,
        best_history: history,
        accepted,
        rejected,
        stalled,
    })
}

/// Seeds a population with `params.seed_method` and evolves it.
pub fn run_ga<R: Rng + ?Sized>(problem: &CoverProblem, params: &GaParams, rng: &mut R) -> Result<GaRun> {
    params.validate()?;
    let initial = seed_population(problem, params.population_size, params.seed_method, params.elite_k, rng)?;
    evolve(problem, params, initial, rng)
}

/// `run_ga` driven by a fresh stream seeded from `params.seed`.
pub fn run_ga_seeded(problem: &CoverProblem, params: &GaParams) -> Result<GaRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    run_ga(problem, params, &mut rng)
}
