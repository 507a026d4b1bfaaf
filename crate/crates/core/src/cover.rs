//! Weighted set-cover instance built from the demand model: objective,
//! feasibility, redundancy removal and the capacity duplication transform.
//!
//! Rows are cells that must be covered, columns are candidate station cells.
//! Both index the retained (non-zero demand) cells. Row `i` needs `k_i`
//! distinct selected columns among those covering it.
//!
//! [`CoverProblem::duplicate_for_capacity`] produces the expanded form in
//! which a cell needing `k_i` stations appears as `k_i` unit-multiplicity
//! copies. A selected station can serve only one copy of a given cell, so a
//! layout is feasible on the expanded instance exactly when every copy can be
//! matched to its own covering station.

use std::io::{BufRead, Write};

use serde::Serialize;

use crate::demand::{
    capacity_requirements, compute_weights, prune_zero_demand, CapacityVector, DemandMatrix,
    RetainedCells, WeightVector, DEFAULT_DELTA,
};
use crate::error::{Error, Result};
use crate::grid::{build_scp_matrix, CellId, CellNetwork, GridSpec, ScpMatrix};

/// Binary station-placement vector over the problem's columns.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Layout {
    bits: Vec<bool>,
}

impl Layout {
    pub fn zeros(n: usize) -> Self {
        Layout { bits: vec![false; n] }
    }

    pub fn ones(n: usize) -> Self {
        Layout { bits: vec![true; n] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Layout { bits }
    }

    pub fn from_indices(n: usize, selected: &[usize]) -> Self {
        let mut l = Layout::zeros(n);
        for &i in selected {
            l.bits[i] = true;
        }
        l
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, v: bool) {
        self.bits[i] = v;
    }

    pub fn flip(&mut self, i: usize) {
        self.bits[i] = !self.bits[i];
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Knobs for building an instance from a demand matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverSpec {
    pub h: usize,
    pub delta: f64,
    /// Offset as a multiple of the mean weight's magnitude.
    pub w0_multiple: f64,
    /// Slots averaged in the weights; all slots when `None`.
    pub slots: Option<Vec<u32>>,
    /// Station capacity; uncapacitated when `None`.
    pub capacity: Option<u32>,
}

impl Default for CoverSpec {
    fn default() -> Self {
        CoverSpec {
            h: 1,
            delta: DEFAULT_DELTA,
            w0_multiple: 0.0,
            slots: None,
            capacity: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoverProblem {
    scp: ScpMatrix,
    weights: Vec<f64>,
    multiplicity: Vec<u32>,
    /// Column (retained cell) each row stands for.
    row_cell: Vec<u32>,
    retained: RetainedCells,
    grid: GridSpec,
    h: usize,
    delta: f64,
    w0: f64,
    /// Per retained cell: `delta * sum_s IN[i, s] / k`, the demand term of the weights.
    load: Vec<f64>,

    // Per distinct row cell: required station count and covering columns.
    group_required: Vec<u32>,
    group_cols: Vec<Vec<u32>>,
    col_groups: Vec<Vec<u32>>,
    group_rows: Vec<Vec<u32>>,
    has_copies: bool,
}

impl CoverProblem {
    /// Builds the pruned instance for `demand` on `net`.
    pub fn from_demand(demand: &DemandMatrix, net: &CellNetwork, spec: &CoverSpec) -> Result<Self> {
        let retained = prune_zero_demand(demand, net)?;
        let all_slots: Vec<u32>;
        let slots = match &spec.slots {
            Some(s) => s.as_slice(),
            None => {
                all_slots = (0..demand.n_slots()).collect();
                &all_slots
            }
        };
        let full = compute_weights(demand, net, spec.h, spec.delta, slots)?;
        let mut weights = full.restrict(&retained)?;
        let w0 = weights.offset_for_multiple(spec.w0_multiple);
        weights = weights.apply_offset(w0)?;

        let multiplicity = match spec.capacity {
            Some(n_c) => capacity_requirements(demand, n_c)?.restrict(&retained)?,
            None => CapacityVector::unit(retained.len()),
        };

        let slot_set: std::collections::BTreeMap<u32, u64> =
            slots.iter().fold(Default::default(), |mut m, &s| {
                *m.entry(s).or_insert(0) += 1;
                m
            });
        let mut load = vec![0.0; retained.len()];
        for (c, s, n) in demand.iter() {
            if let (Some(r), Some(&mult)) = (retained.reduced(c), slot_set.get(&s)) {
                load[r] += (n * mult) as f64;
            }
        }
        for l in &mut load {
            *l *= spec.delta / slots.len() as f64;
        }

        let scp = build_scp_matrix(net, spec.h, retained.cells())?;
        Self::assemble(scp, weights, multiplicity.k, None, retained, *net.grid(), load)
    }

    /// Instance over an explicit cell set with given weights, mostly for
    /// fixtures. The demand term is taken as zero.
    pub fn on_cells(
        net: &CellNetwork,
        h: usize,
        cells: &[CellId],
        weights: Vec<f64>,
        multiplicity: Vec<u32>,
    ) -> Result<Self> {
        let retained = RetainedCells::new(net.n_cells(), cells.to_vec())?;
        if retained.cells() != cells {
            return Err(Error::InvalidParameter("cells must be sorted by index".into()));
        }
        let scp = build_scp_matrix(net, h, retained.cells())?;
        let n = retained.len();
        let wv = WeightVector {
            w: weights,
            delta: 1.0,
            h,
            k_slots: 1,
            w0: 0.0,
        };
        Self::assemble(scp, wv, multiplicity, None, retained, *net.grid(), vec![0.0; n])
    }

    fn assemble(
        scp: ScpMatrix,
        weights: WeightVector,
        multiplicity: Vec<u32>,
        row_cell: Option<Vec<u32>>,
        retained: RetainedCells,
        grid: GridSpec,
        load: Vec<f64>,
    ) -> Result<Self> {
        let n_cols = scp.n_cols();
        let n_rows = scp.n_rows();
        if weights.len() != n_cols {
            return Err(Error::DimensionMismatch {
                expected: n_cols,
                got: weights.len(),
            });
        }
        if multiplicity.len() != n_rows {
            return Err(Error::DimensionMismatch {
                expected: n_rows,
                got: multiplicity.len(),
            });
        }
        if retained.len() != n_cols || load.len() != n_cols {
            return Err(Error::DimensionMismatch {
                expected: n_cols,
                got: retained.len(),
            });
        }
        if weights.w.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter("weights must be finite".into()));
        }
        if multiplicity.iter().any(|&k| k == 0) {
            return Err(Error::InvalidParameter("multiplicities must be at least 1".into()));
        }
        let row_cell = row_cell.unwrap_or_else(|| (0..n_rows as u32).collect());

        let mut group_rows: Vec<Vec<u32>> = vec![Vec::new(); n_cols];
        for (r, &c) in row_cell.iter().enumerate() {
            group_rows
                .get_mut(c as usize)
                .ok_or(Error::DimensionMismatch {
                    expected: n_cols,
                    got: c as usize + 1,
                })?
                .push(r as u32);
        }
        let has_copies = group_rows.iter().any(|g| g.len() > 1);
        // Groups are the distinct row cells, in first-appearance order.
        let mut group_of_cell = vec![u32::MAX; n_cols];
        let mut groups: Vec<Vec<u32>> = Vec::new();
        for &c in &row_cell {
            if group_of_cell[c as usize] == u32::MAX {
                group_of_cell[c as usize] = groups.len() as u32;
                groups.push(group_rows[c as usize].clone());
            }
        }
        let mut group_required = Vec::with_capacity(groups.len());
        let mut group_cols = Vec::with_capacity(groups.len());
        for rows in &groups {
            let cols = scp.row(rows[0] as usize).to_vec();
            if rows.iter().any(|&r| scp.row(r as usize) != cols.as_slice()) {
                return Err(Error::InvalidParameter(
                    "copies of a cell must share their covering columns".into(),
                ));
            }
            let required: u32 = rows.iter().map(|&r| multiplicity[r as usize]).sum();
            if (cols.len() as u32) < required {
                return Err(Error::InfeasibleInstance {
                    row: rows[0] as usize,
                    available: cols.len(),
                    required,
                });
            }
            group_required.push(required);
            group_cols.push(cols);
        }
        let mut col_groups = vec![Vec::new(); n_cols];
        for (g, cols) in group_cols.iter().enumerate() {
            for &c in cols {
                col_groups[c as usize].push(g as u32);
            }
        }

        Ok(CoverProblem {
            h: scp.h(),
            scp,
            delta: weights.delta,
            w0: weights.w0,
            weights: weights.w,
            multiplicity,
            row_cell,
            retained,
            grid,
            load,
            group_required,
            group_cols,
            col_groups,
            group_rows: groups,
            has_copies,
        })
    }

    /// Same instance with the weights replaced.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidParameter("weights must be finite".into()));
        }
        let mut p = self.clone();
        p.weights = weights;
        Ok(p)
    }

    /// Same instance with per-row multiplicities replaced.
    pub fn with_multiplicity(&self, multiplicity: Vec<u32>) -> Result<Self> {
        Self::assemble(
            self.scp.clone(),
            self.weight_vector(),
            multiplicity,
            Some(self.row_cell.clone()),
            self.retained.clone(),
            self.grid,
            self.load.clone(),
        )
    }

    pub fn scp(&self) -> &ScpMatrix {
        &self.scp
    }

    pub fn n_rows(&self) -> usize {
        self.scp.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.scp.n_cols()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_vector(&self) -> WeightVector {
        WeightVector {
            w: self.weights.clone(),
            delta: self.delta,
            h: self.h,
            k_slots: 1,
            w0: self.w0,
        }
    }

    pub fn multiplicity(&self) -> &[u32] {
        &self.multiplicity
    }

    pub fn row_cell(&self, row: usize) -> usize {
        self.row_cell[row] as usize
    }

    pub fn retained(&self) -> &RetainedCells {
        &self.retained
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn w0(&self) -> f64 {
        self.w0
    }

    pub fn load(&self) -> &[f64] {
        &self.load
    }

    pub fn has_copies(&self) -> bool {
        self.has_copies
    }

    pub(crate) fn n_groups(&self) -> usize {
        self.group_required.len()
    }

    pub(crate) fn group_required(&self) -> &[u32] {
        &self.group_required
    }

    pub(crate) fn group_cols(&self, group: usize) -> &[u32] {
        &self.group_cols[group]
    }

    pub(crate) fn col_groups(&self, col: usize) -> &[u32] {
        &self.col_groups[col]
    }

    fn check_len(&self, x: &Layout) -> Result<()> {
        if x.len() != self.n_cols() {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Total weight of the selected columns.
    pub fn objective(&self, x: &Layout) -> Result<f64> {
        self.check_len(x)?;
        Ok(x.selected().map(|i| self.weights[i]).sum())
    }

    /// Number of selected columns covering each group.
    pub(crate) fn group_counts(&self, x: &Layout) -> Vec<u32> {
        let mut counts = vec![0u32; self.n_groups()];
        for c in x.selected() {
            for &g in &self.col_groups[c] {
                counts[g as usize] += 1;
            }
        }
        counts
    }

    /// True when every row is covered by at least its multiplicity of
    /// selected columns (every copy by its own station on expanded instances).
    pub fn is_feasible(&self, x: &Layout) -> bool {
        if x.len() != self.n_cols() {
            return false;
        }
        if self.has_copies {
            return self.copies_matchable(x);
        }
        let mut counts = vec![0u32; self.n_rows()];
        for c in x.selected() {
            for &r in self.scp.col(c) {
                counts[r as usize] += 1;
            }
        }
        counts.iter().zip(&self.multiplicity).all(|(c, k)| c >= k)
    }

    /// Bipartite matching of row copies to distinct selected columns, per cell.
    fn copies_matchable(&self, x: &Layout) -> bool {
        for rows in &self.group_rows {
            // Each row contributes `multiplicity` slots needing distinct stations.
            let slots: Vec<&[u32]> = rows
                .iter()
                .flat_map(|&r| std::iter::repeat_n(self.scp.row(r as usize), self.multiplicity[r as usize] as usize))
                .collect();
            let mut owner: std::collections::HashMap<u32, usize> = Default::default();
            for s in 0..slots.len() {
                let mut seen = std::collections::HashSet::new();
                if !augment(s, &slots, x, &mut owner, &mut seen) {
                    return false;
                }
            }
        }
        true
    }

    /// Drops redundant selected columns, examined from the largest weight down
    /// (equal weights: lower index first). The result is feasible and no
    /// selected column can be removed without breaking feasibility.
    pub fn remove_redundant(&self, x: &Layout) -> Result<Layout> {
        self.check_len(x)?;
        if !self.is_feasible(x) {
            return Err(Error::InfeasibleLayout);
        }
        let mut counts = self.group_counts(x);
        Ok(self.prune_with_counts(x.clone(), &mut counts))
    }

    /// Redundancy removal given precomputed group counts for `x` (which must be feasible).
    pub(crate) fn prune_with_counts(&self, mut x: Layout, counts: &mut [u32]) -> Layout {
        let mut order: Vec<usize> = x.selected().collect();
        order.sort_by(|&a, &b| self.weights[b].total_cmp(&self.weights[a]).then(a.cmp(&b)));
        for s in order {
            let removable = self.col_groups[s]
                .iter()
                .all(|&g| counts[g as usize] > self.group_required[g as usize]);
            if removable {
                for &g in &self.col_groups[s] {
                    counts[g as usize] -= 1;
                }
                x.set(s, false);
            }
        }
        x
    }

    /// True when `x` is feasible and no selected column can be dropped.
    pub fn is_irredundant(&self, x: &Layout) -> bool {
        if !self.is_feasible(x) {
            return false;
        }
        let counts = self.group_counts(x);
        x.selected().all(|s| {
            self.col_groups[s]
                .iter()
                .any(|&g| counts[g as usize] <= self.group_required[g as usize])
        })
    }

    /// Expanded instance in which row `i` appears `k_i` times with unit
    /// multiplicity and its demand term in every weight is divided by `k_i`.
    /// Columns are unchanged.
    pub fn duplicate_for_capacity(&self) -> CoverProblem {
        if self.has_copies || self.multiplicity.iter().all(|&k| k == 1) {
            return self.clone();
        }
        let mut weights = self.weights.clone();
        for (col, w) in weights.iter_mut().enumerate() {
            let station = self.retained.full(col);
            for &r in self.scp.col(col) {
                let k = self.multiplicity[r as usize];
                if k > 1 {
                    let cell = self.retained.full(self.row_cell[r as usize] as usize);
                    let j = self.grid.hop_distance(station, cell) as f64;
                    let term = (j - self.h as f64) * self.load[self.row_cell[r as usize] as usize];
                    *w += term * (1.0 / k as f64 - 1.0);
                }
            }
        }
        let mut rows = Vec::new();
        let mut row_cell = Vec::new();
        for r in 0..self.n_rows() {
            for _ in 0..self.multiplicity[r] {
                rows.push(self.scp.row(r).to_vec());
                row_cell.push(self.row_cell[r]);
            }
        }
        let n_rows = rows.len();
        let scp = ScpMatrix::from_rows(self.h, self.n_cols(), rows).expect("columns unchanged");
        let wv = WeightVector {
            w: weights,
            ..self.weight_vector()
        };
        Self::assemble(
            scp,
            wv,
            vec![1; n_rows],
            Some(row_cell),
            self.retained.clone(),
            self.grid,
            self.load.clone(),
        )
        .expect("duplication preserves feasibility of the all-ones layout")
    }

    /// Full-grid cells of the selected columns, sorted.
    pub fn stations(&self, x: &Layout) -> Vec<CellId> {
        x.selected().map(|c| self.retained.full(c)).collect()
    }

    /// Layout selecting the given full-grid cells; each must be a retained cell.
    pub fn layout_from_cells(&self, cells: &[CellId]) -> Result<Layout> {
        let mut x = Layout::zeros(self.n_cols());
        for &c in cells {
            let r = self.retained.reduced(c).ok_or_else(|| {
                Error::InvalidParameter(format!("cell {c} is not a candidate station"))
            })?;
            x.set(r, true);
        }
        Ok(x)
    }
}

fn augment(
    slot: usize,
    slots: &[&[u32]],
    x: &Layout,
    owner: &mut std::collections::HashMap<u32, usize>,
    seen: &mut std::collections::HashSet<u32>,
) -> bool {
    for &c in slots[slot] {
        if !x.get(c as usize) || !seen.insert(c) {
            continue;
        }
        let free = match owner.get(&c) {
            None => true,
            Some(&other) => augment(other, slots, x, owner, seen),
        };
        if free {
            owner.insert(c, slot);
            return true;
        }
    }
    false
}

/// Contents of a layout file.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutFile {
    pub h: usize,
    pub delta: f64,
    pub w0: f64,
    pub objective: f64,
    pub stations: Vec<CellId>,
}

impl LayoutFile {
    pub fn new(problem: &CoverProblem, x: &Layout) -> Result<Self> {
        Ok(LayoutFile {
            h: problem.h(),
            delta: problem.delta(),
            w0: problem.w0(),
            objective: problem.objective(x)?,
            stations: problem.stations(x),
        })
    }

    /// `# key=value` header followed by one full-grid cell index per line.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# h={}", self.h)?;
        writeln!(out, "# delta={}", self.delta)?;
        writeln!(out, "# w0={}", self.w0)?;
        writeln!(out, "# objective={}", self.objective)?;
        writeln!(out, "# station_count={}", self.stations.len())?;
        let mut cells = self.stations.clone();
        cells.sort_unstable();
        for c in cells {
            writeln!(out, "{}", c.0)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut meta = std::collections::BTreeMap::new();
        let mut stations = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                if let Some((k, v)) = c.trim().split_once('=') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            let idx = line.parse::<usize>().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("expected a cell index, got {line:?}"),
            })?;
            stations.push(CellId(idx));
        }
        let field = |k: &str| -> Result<&String> {
            meta.get(k).ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("layout header lacks `{k}`"),
            })
        };
        let num = |k: &str| -> Result<f64> {
            field(k)?.parse().map_err(|_| Error::Parse {
                line: 0,
                message: format!("bad `{k}` in layout header"),
            })
        };
        let layout = LayoutFile {
            h: num("h")? as usize,
            delta: num("delta")?,
            w0: num("w0")?,
            objective: num("objective")?,
            stations,
        };
        if let Some(n) = meta.get("station_count") {
            if n.parse::<usize>().ok() != Some(layout.stations.len()) {
                return Err(Error::Parse {
                    line: 0,
                    message: "station_count does not match the listed cells".into(),
                });
            }
        }
        Ok(layout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::SlotClock;
    use crate::grid::build_network;

    fn line3(w: Vec<f64>, k: Vec<u32>) -> CoverProblem {
        let net = build_network(GridSpec::with_dims(3, 1).unwrap()).unwrap();
        CoverProblem::on_cells(&net, 1, &[CellId(0), CellId(1), CellId(2)], w, k).unwrap()
    }

    #[test]
    fn objective_is_a_dot_product() {
        let p = line3(vec![-4.0, -1.0, 0.0], vec![1; 3]);
        assert_eq!(p.objective(&Layout::zeros(3)).unwrap(), 0.0);
        assert_eq!(p.objective(&Layout::from_indices(3, &[0, 2])).unwrap(), -4.0);
        assert!(p.objective(&Layout::zeros(2)).is_err());
    }

    #[test]
    fn feasibility_with_multiplicity() {
        let p = line3(vec![-1.0; 3], vec![1; 3]);
        assert!(p.is_feasible(&Layout::ones(3)));
        assert!(p.is_feasible(&Layout::from_indices(3, &[1])));
        assert!(!p.is_feasible(&Layout::from_indices(3, &[0])));
        let p2 = p.with_multiplicity(vec![1, 2, 1]).unwrap();
        assert!(!p2.is_feasible(&Layout::from_indices(3, &[1])));
        assert!(p2.is_feasible(&Layout::from_indices(3, &[0, 1])));
    }

    #[test]
    fn construction_rejects_impossible_multiplicity() {
        let p = line3(vec![-1.0; 3], vec![1; 3]);
        assert!(matches!(
            p.with_multiplicity(vec![3, 1, 1]),
            Err(Error::InfeasibleInstance { row: 0, available: 2, required: 3 })
        ));
        assert!(p.with_multiplicity(vec![0, 1, 1]).is_err());
    }

    #[test]
    fn redundancy_removal() {
        let p = line3(vec![-1.0; 3], vec![1; 3]);
        let x = Layout::from_indices(3, &[0, 1]);
        let y = p.remove_redundant(&x).unwrap();
        assert_eq!(y, Layout::from_indices(3, &[1]));
        assert_eq!(p.remove_redundant(&y).unwrap(), y);
        assert!(p.is_irredundant(&y));
        assert!(!p.is_irredundant(&x));
        assert!(p.remove_redundant(&Layout::from_indices(3, &[0])).is_err());
    }

    #[test]
    fn removal_visits_worst_weight_first() {
        // {0,1,2} all selected: column 2 is worst (0.0) and is dropped first,
        // then column 0 (-1.0) is dropped, keeping the best column 1.
        let p = line3(vec![-1.0, -5.0, 0.0], vec![1; 3]);
        let y = p.remove_redundant(&Layout::ones(3)).unwrap();
        assert_eq!(y, Layout::from_indices(3, &[1]));
        // With column 1 worst, it goes first and {0, 2} stays.
        let p = line3(vec![-1.0, 3.0, -1.0], vec![1; 3]);
        let y = p.remove_redundant(&Layout::ones(3)).unwrap();
        assert_eq!(y, Layout::from_indices(3, &[0, 2]));
    }

    #[test]
    fn duplication_unit_multiplicity_is_identity() {
        let p = line3(vec![-1.0, -2.0, -3.0], vec![1; 3]);
        let d = p.duplicate_for_capacity();
        assert_eq!(d.scp(), p.scp());
        assert_eq!(d.weights(), p.weights());
        assert!(!d.has_copies());
    }

    #[test]
    fn duplication_single_cell_needs_three_stations() {
        let net = build_network(GridSpec::with_dims(3, 3).unwrap()).unwrap();
        let cells: Vec<CellId> = (0..9).map(CellId).collect();
        let mut k = vec![1; 9];
        k[4] = 3;
        let p = CoverProblem::on_cells(&net, 1, &cells, vec![-1.0; 9], k).unwrap();
        let d = p.duplicate_for_capacity();
        assert_eq!(d.n_rows(), 11);
        let copies: Vec<usize> = (0..d.n_rows()).filter(|&r| d.row_cell(r) == 4).collect();
        assert_eq!(copies.len(), 3);
        for &r in &copies {
            assert_eq!(d.scp().row(r), p.scp().row(4));
        }
        for mask in 0u32..(1 << 9) {
            let x = Layout::from_bits((0..9).map(|i| mask >> i & 1 == 1).collect());
            assert_eq!(p.is_feasible(&x), d.is_feasible(&x), "mask {mask:b}");
        }
    }

    #[test]
    fn duplication_rescales_demand_terms() {
        // 1x3 line, IN = [0, 6, 0] would prune; use [2, 6, 2] so all cells stay.
        let net = build_network(GridSpec::with_dims(3, 1).unwrap()).unwrap();
        let mut d = DemandMatrix::new(3, SlotClock::new(0, 1800, 1).unwrap());
        d.add(CellId(0), 0, 2).unwrap();
        d.add(CellId(1), 0, 6).unwrap();
        d.add(CellId(2), 0, 2).unwrap();
        let spec = CoverSpec {
            h: 1,
            delta: 1.0,
            capacity: Some(3),
            ..Default::default()
        };
        let p = CoverProblem::from_demand(&d, &net, &spec).unwrap();
        assert_eq!(p.multiplicity(), &[1, 2, 1]);
        assert_eq!(p.weights(), &[-2.0, -6.0, -2.0]);
        let e = p.duplicate_for_capacity();
        // Only the middle cell's own term (j = 0) is halved; at j = 1 the factor is zero.
        assert_eq!(e.weights(), &[-2.0, -3.0, -2.0]);
        assert_eq!(e.n_rows(), 4);
    }

    #[test]
    fn from_demand_prunes_and_offsets() {
        let net = build_network(GridSpec::with_dims(3, 1).unwrap()).unwrap();
        let mut d = DemandMatrix::new(3, SlotClock::new(0, 1800, 2).unwrap());
        d.add(CellId(1), 0, 4).unwrap();
        d.add(CellId(2), 1, 2).unwrap();
        let spec = CoverSpec {
            h: 1,
            delta: 1.0,
            slots: Some(vec![0, 1]),
            ..Default::default()
        };
        let p = CoverProblem::from_demand(&d, &net, &spec).unwrap();
        assert_eq!(p.retained().cells(), &[CellId(1), CellId(2)]);
        // cell 1: -(4)/2 = -2 ; cell 2: -(2)/2 = -1
        assert_eq!(p.weights(), &[-2.0, -1.0]);
        assert_eq!(p.load(), &[2.0, 1.0]);
        let spec = CoverSpec {
            w0_multiple: 2.0,
            ..spec
        };
        let q = CoverProblem::from_demand(&d, &net, &spec).unwrap();
        assert_eq!(q.w0(), 3.0);
        assert_eq!(q.weights(), &[1.0, 2.0]);
    }

    #[test]
    fn layout_file_round_trip() {
        let p = line3(vec![-1.0, -2.0, -3.0], vec![1; 3]);
        let x = Layout::from_indices(3, &[0, 2]);
        let f = LayoutFile::new(&p, &x).unwrap();
        let mut buf = Vec::new();
        f.write(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.ends_with("# station_count=2\n0\n2\n"));
        let back = LayoutFile::read(&buf[..]).unwrap();
        assert_eq!(back, f);
        assert_eq!(p.layout_from_cells(&back.stations).unwrap(), x);
    }
}
