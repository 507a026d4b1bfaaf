//! Chvátal-style greedy covering, its randomised elite variant, and the
//! greedy repair used on GA offspring.

use std::cmp::Ordering;

use rand::Rng;

use crate::cover::{CoverProblem, Layout};
use crate::error::Result;

/// Candidate column with its current score.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    col: usize,
    gain: u32,
    score: f64,
}

/// Lower score first; then more newly covered rows; then lower index.
fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    a.score
        .partial_cmp(&b.score)
        .unwrap_or(Ordering::Equal)
        .then(b.gain.cmp(&a.gain))
        .then(a.col.cmp(&b.col))
}

/// Incremental state of a greedy covering pass.
struct Residual<'a> {
    problem: &'a CoverProblem,
    residual: Vec<u32>,
    gain: Vec<u32>,
    open_groups: usize,
}

impl<'a> Residual<'a> {
    fn new(problem: &'a CoverProblem, x: &Layout) -> Self {
        let counts = problem.group_counts(x);
        let residual: Vec<u32> = problem
            .group_required()
            .iter()
            .zip(&counts)
            .map(|(&req, &c)| req.saturating_sub(c))
            .collect();
        let gain = (0..problem.n_cols())
            .map(|c| {
                if x.get(c) {
                    0
                } else {
                    problem
                        .col_groups(c)
                        .iter()
                        .filter(|&&g| residual[g as usize] > 0)
                        .count() as u32
                }
            })
            .collect();
        let open_groups = residual.iter().filter(|&&r| r > 0).count();
        Residual {
            problem,
            residual,
            gain,
            open_groups,
        }
    }

    fn select(&mut self, x: &mut Layout, col: usize) {
        x.set(col, true);
        self.gain[col] = 0;
        for &g in self.problem.col_groups(col) {
            let r = &mut self.residual[g as usize];
            if *r == 0 {
                continue;
            }
            *r -= 1;
            if *r == 0 {
                self.open_groups -= 1;
                for &c in self.problem.group_cols(g as usize) {
                    if !x.get(c as usize) {
                        self.gain[c as usize] -= 1;
                    }
                }
            }
        }
    }

    /// The `k` best candidates in rank order.
    fn best(&self, x: &Layout, k: usize) -> Vec<Candidate> {
        let weights = self.problem.weights();
        let mut top: Vec<Candidate> = Vec::with_capacity(k + 1);
        for col in 0..self.problem.n_cols() {
            let gain = self.gain[col];
            if gain == 0 || x.get(col) {
                continue;
            }
            let cand = Candidate {
                col,
                gain,
                score: weights[col] / gain as f64,
            };
            if top.len() == k && rank(&cand, &top[k - 1]) != Ordering::Less {
                continue;
            }
            let pos = top.partition_point(|t| rank(t, &cand) == Ordering::Less);
            top.insert(pos, cand);
            top.truncate(k);
        }
        top
    }
}

/// Greedily adds columns to `x` until every row is covered, picking at each
/// step uniformly among the `elite_k` best-scoring columns, then removes
/// redundant columns.
fn complete<R: Rng + ?Sized>(problem: &CoverProblem, mut x: Layout, elite_k: usize, rng: &mut Option<&mut R>) -> Layout {
    let mut state = Residual::new(problem, &x);
    while state.open_groups > 0 {
        let top = state.best(&x, elite_k.max(1));
        let pick = match (top.len(), rng.as_mut()) {
            (0, _) => unreachable!("constructed instances are coverable"),
            (1, _) | (_, None) => top[0].col,
            (n, Some(r)) => top[r.random_range(0..n)].col,
        };
        state.select(&mut x, pick);
    }
    let mut counts = problem.group_counts(&x);
    problem.prune_with_counts(x, &mut counts)
}

/// Deterministic greedy cover: repeatedly selects the column with the lowest
/// weight per still-uncovered row, then drops redundant columns.
pub fn chvatal_greedy(problem: &CoverProblem) -> Result<Layout> {
    Ok(complete::<rand_chacha::ChaCha8Rng>(
        problem,
        Layout::zeros(problem.n_cols()),
        1,
        &mut None,
    ))
}

/// Greedy cover choosing uniformly among the `elite_k` best columns at each step.
pub fn stochastic_chvatal<R: Rng + ?Sized>(problem: &CoverProblem, elite_k: usize, rng: &mut R) -> Result<Layout> {
    if elite_k == 0 {
        return Err(crate::Error::InvalidParameter("elite_k must be at least 1".into()));
    }
    Ok(complete(problem, Layout::zeros(problem.n_cols()), elite_k, &mut Some(rng)))
}

/// Completes an arbitrary binary vector to a feasible cover with the greedy
/// rule, then removes redundant columns.
pub fn repair(problem: &CoverProblem, x: &Layout) -> Layout {
    complete::<rand_chacha::ChaCha8Rng>(problem, x.clone(), 1, &mut None)
}
