//! Exhaustive search over irredundant covers for small instances.

use crate::cover::{CoverProblem, Layout};
use crate::error::{Error, Result};

/// Largest column count accepted by the exhaustive search.
pub const EXACT_MAX_COLS: usize = 25;

struct Search<'a> {
    problem: &'a CoverProblem,
    n: usize,
    group_mask: Vec<u32>,
    required: Vec<u32>,
    col_groups: Vec<Vec<u32>>,
    /// Columns sharing at least one group, as masks.
    col_neighbors: Vec<u32>,
}

impl Search<'_> {
    fn covered(&self, g: usize, mask: u32) -> u32 {
        (self.group_mask[g] & mask).count_ones()
    }

    fn redundant(&self, c: usize, included: u32) -> bool {
        self.col_groups[c]
            .iter()
            .all(|&g| self.covered(g as usize, included) > self.required[g as usize])
    }

    /// Visits every feasible irredundant cover as a column mask.
    fn run(&self, visit: &mut impl FnMut(u32)) {
        let full = if self.n == 32 { u32::MAX } else { (1u32 << self.n) - 1 };
        self.dfs(0, 0, full, visit);
    }

    fn dfs(&self, i: usize, included: u32, available: u32, visit: &mut impl FnMut(u32)) {
        if i == self.n {
            if (0..self.required.len()).all(|g| self.covered(g, included) >= self.required[g]) {
                visit(included);
            }
            return;
        }
        let bit = 1u32 << i;

        let with = included | bit;
        let mut touched = self.col_neighbors[i] & with;
        let mut ok = true;
        while touched != 0 {
            let c = touched.trailing_zeros() as usize;
            touched &= touched - 1;
            if self.redundant(c, with) {
                ok = false;
                break;
            }
        }
        if ok {
            self.dfs(i + 1, with, available, visit);
        }

        let without = available & !bit;
        if self.col_groups[i]
            .iter()
            .all(|&g| self.covered(g as usize, without) >= self.required[g as usize])
        {
            self.dfs(i + 1, included, without, visit);
        }
    }
}

fn search(problem: &CoverProblem) -> Result<Search<'_>> {
    let n = problem.n_cols();
    if n > EXACT_MAX_COLS {
        return Err(Error::TooLarge {
            n_cols: n,
            limit: EXACT_MAX_COLS,
        });
    }
    let n_groups = problem.n_groups();
    let mut group_mask = vec![0u32; n_groups];
    let col_groups: Vec<Vec<u32>> = (0..n).map(|c| problem.col_groups(c).to_vec()).collect();
    for (c, groups) in col_groups.iter().enumerate() {
        for &g in groups {
            group_mask[g as usize] |= 1 << c;
        }
    }
    let col_neighbors = col_groups
        .iter()
        .map(|gs| gs.iter().fold(0u32, |m, &g| m | group_mask[g as usize]))
        .collect();
    Ok(Search {
        problem,
        n,
        group_mask,
        required: problem.group_required().to_vec(),
        col_groups,
        col_neighbors,
    })
}

fn mask_to_layout(n: usize, mask: u32) -> Layout {
    Layout::from_bits((0..n).map(|i| mask >> i & 1 == 1).collect())
}

/// Calls `visit` for every feasible irredundant cover of `problem`.
pub fn for_each_irredundant(problem: &CoverProblem, mut visit: impl FnMut(&Layout)) -> Result<()> {
    let s = search(problem)?;
    s.run(&mut |mask| visit(&mask_to_layout(s.n, mask)));
    Ok(())
}

/// Minimum-objective irredundant cover. Ties go to fewer stations, then to
/// the lexicographically smallest list of selected columns.
pub fn exact_solve(problem: &CoverProblem) -> Result<Layout> {
    let s = search(problem)?;
    let w = s.problem.weights();
    let mut best: Option<(f64, u32, u32)> = None;
    s.run(&mut |mask| {
        let obj: f64 = (0..s.n).filter(|&i| mask >> i & 1 == 1).map(|i| w[i]).sum();
        let count = mask.count_ones();
        let better = match best {
            None => true,
            Some((bo, bc, bm)) => {
                obj < bo || (obj == bo && (count < bc || (count == bc && lex_less(mask, bm))))
            }
        };
        if better {
            best = Some((obj, count, mask));
        }
    });
    let (_, _, mask) = best.expect("constructed instances have at least one cover");
    Ok(mask_to_layout(s.n, mask))
}

/// Fewest stations over all feasible covers.
pub fn min_station_count(problem: &CoverProblem) -> Result<usize> {
    let s = search(problem)?;
    let mut best = u32::MAX;
    s.run(&mut |mask| best = best.min(mask.count_ones()));
    Ok(best as usize)
}

/// Sorted-index-list comparison for two masks of equal popcount: the mask
/// whose lowest differing selected index is smaller comes first.
fn lex_less(a: u32, b: u32) -> bool {
    let diff = a ^ b;
    if diff == 0 {
        return false;
    }
    let low = diff.trailing_zeros();
    a >> low & 1 == 1
}
