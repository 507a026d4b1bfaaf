//! Demand matrix and the optimisation inputs derived from it: cell weights,
//! capacity multiplicities, the construction-cost offset and zero-demand
//! pruning.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellId, CellNetwork};

/// Default EV penetration ratio.
pub const DEFAULT_DELTA: f64 = 0.25;

/// Division of the study window into equal time slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotClock {
    /// Epoch seconds (UTC) at which slot 0 begins.
    pub study_start: i64,
    pub slot_duration: i64,
    pub n_slots: u32,
}

impl SlotClock {
    pub fn new(study_start: i64, slot_duration: i64, n_slots: u32) -> Result<Self> {
        if slot_duration <= 0 {
            return Err(Error::InvalidParameter(format!(
                "slot duration must be positive, got {slot_duration}"
            )));
        }
        if n_slots == 0 {
            return Err(Error::InvalidParameter("need at least one time slot".into()));
        }
        Ok(SlotClock {
            study_start,
            slot_duration,
            n_slots,
        })
    }

    /// Clock covering `[study_start, study_start + days)`.
    pub fn for_days(study_start: i64, slot_duration: i64, days: u32) -> Result<Self> {
        if slot_duration <= 0 {
            return Err(Error::InvalidParameter(format!(
                "slot duration must be positive, got {slot_duration}"
            )));
        }
        let span = days as i64 * 86_400;
        let n = (span + slot_duration - 1) / slot_duration;
        Self::new(study_start, slot_duration, n as u32)
    }

    pub fn study_end(&self) -> i64 {
        self.study_start + self.slot_duration * self.n_slots as i64
    }

    pub fn slot_of(&self, t: i64) -> Option<u32> {
        if t < self.study_start {
            return None;
        }
        let s = (t - self.study_start) / self.slot_duration;
        (s < self.n_slots as i64).then_some(s as u32)
    }
}

/// Long-trip arrival counts per `(cell, slot)`. Zero counts are not stored,
/// so two matrices with the same non-zero entries compare equal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemandMatrix {
    n_cells: usize,
    clock: SlotClock,
    counts: BTreeMap<(CellId, u32), u64>,
}

impl DemandMatrix {
    pub fn new(n_cells: usize, clock: SlotClock) -> Self {
        DemandMatrix {
            n_cells,
            clock,
            counts: BTreeMap::new(),
        }
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn clock(&self) -> &SlotClock {
        &self.clock
    }

    pub fn n_slots(&self) -> u32 {
        self.clock.n_slots
    }

    pub fn add(&mut self, cell: CellId, slot: u32, count: u64) -> Result<()> {
        if cell.0 >= self.n_cells {
            return Err(Error::InvalidCell {
                index: cell.0,
                n_cells: self.n_cells,
            });
        }
        if slot >= self.clock.n_slots {
            return Err(Error::InvalidParameter(format!(
                "slot {slot} outside [0, {})",
                self.clock.n_slots
            )));
        }
        if count > 0 {
            *self.counts.entry((cell, slot)).or_insert(0) += count;
        }
        Ok(())
    }

    pub fn get(&self, cell: CellId, slot: u32) -> u64 {
        self.counts.get(&(cell, slot)).copied().unwrap_or(0)
    }

    /// Non-zero entries in `(cell, slot)` order.
    pub fn iter(&self) -> impl Iterator<Item = (CellId, u32, u64)> + '_ {
        self.counts.iter().map(|(&(c, s), &n)| (c, s, n))
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.counts.is_empty()
    }

    /// Per-cell sum over all slots.
    pub fn cell_totals(&self) -> Vec<u64> {
        let mut totals = vec![0; self.n_cells];
        for (c, _, n) in self.iter() {
            totals[c.0] += n;
        }
        totals
    }

    /// Per-cell maximum over slots.
    pub fn cell_peaks(&self) -> Vec<u64> {
        let mut peaks = vec![0; self.n_cells];
        for (c, _, n) in self.iter() {
            peaks[c.0] = peaks[c.0].max(n);
        }
        peaks
    }

    /// Element-wise sum. Both matrices must share cell count and clock.
    pub fn merge(&mut self, other: &DemandMatrix) -> Result<()> {
        if self.n_cells != other.n_cells || self.clock != other.clock {
            return Err(Error::InvalidParameter(
                "cannot merge demand matrices with different shapes".into(),
            ));
        }
        for (&key, &n) in &other.counts {
            *self.counts.entry(key).or_insert(0) += n;
        }
        Ok(())
    }

    /// Copy with every count multiplied by `factor`.
    pub fn scaled(&self, factor: u64) -> DemandMatrix {
        let mut out = DemandMatrix::new(self.n_cells, self.clock);
        for (&key, &n) in &self.counts {
            if n * factor > 0 {
                out.counts.insert(key, n * factor);
            }
        }
        out
    }

    /// Serialises as `cell_index,slot_index,count` rows, sorted by cell then
    /// slot, preceded by `# key=value` shape metadata.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# n_cells={}", self.n_cells)?;
        writeln!(out, "# study_start={}", self.clock.study_start)?;
        writeln!(out, "# slot_duration_s={}", self.clock.slot_duration)?;
        writeln!(out, "# n_slots={}", self.clock.n_slots)?;
        writeln!(out, "cell_index,slot_index,count")?;
        for (c, s, n) in self.iter() {
            writeln!(out, "{},{},{}", c.0, s, n)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<DemandMatrix> {
        let mut meta = BTreeMap::new();
        let mut rows = Vec::new();
        let mut seen_header = false;
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            let lineno = lineno + 1;
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((k, v)) = comment.trim().split_once('=') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if !seen_header {
                seen_header = true;
                if line.starts_with("cell_index") {
                    continue;
                }
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parse = |s: &str| -> Result<u64> {
                s.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("expected an integer, got {s:?}"),
                })
            };
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected 3 fields, got {}", fields.len()),
                });
            }
            rows.push((lineno, parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
        }
        let get = |key: &str| -> Result<i64> {
            meta.get(key)
                .ok_or_else(|| Error::Parse {
                    line: 0,
                    message: format!("missing metadata `# {key}=...`"),
                })?
                .parse()
                .map_err(|_| Error::Parse {
                    line: 0,
                    message: format!("bad value for metadata {key}"),
                })
        };
        let clock = SlotClock::new(
            get("study_start")?,
            get("slot_duration_s")?,
            get("n_slots")? as u32,
        )?;
        let mut matrix = DemandMatrix::new(get("n_cells")? as usize, clock);
        for (lineno, c, s, n) in rows {
            matrix
                .add(CellId(c as usize), s as u32, n)
                .map_err(|e| Error::Parse {
                    line: lineno,
                    message: e.to_string(),
                })?;
        }
        Ok(matrix)
    }
}

/// Linear battery depletion model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    /// Depletion per km travelled.
    pub c: f64,
    /// Initial state of charge in `[0, 1]`.
    pub u0: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        BatteryParams {
            c: 1.0 / 150.0,
            u0: 1.0,
        }
    }
}

impl BatteryParams {
    pub fn new(c: f64, u0: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParameter(format!("depletion rate must be positive, got {c}")));
        }
        if !(0.0..=1.0).contains(&u0) {
            return Err(Error::InvalidParameter(format!("initial charge must lie in [0,1], got {u0}")));
        }
        Ok(BatteryParams { c, u0 })
    }

    /// Distance at which the battery runs empty.
    pub fn range_km(&self) -> f64 {
        self.u0 / self.c
    }

    /// Remaining charge after `l` km.
    pub fn battery_level(&self, l: f64) -> Result<f64> {
        if !(l >= 0.0) {
            return Err(Error::InvalidParameter(format!("distance must be non-negative, got {l}")));
        }
        let u = self.u0 - self.c * l;
        Ok(if u > 0.0 { u } else { 0.0 })
    }
}

/// Discomfort weight per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub w: Vec<f64>,
    pub delta: f64,
    pub h: usize,
    pub k_slots: usize,
    /// Uniform offset already added to every entry of `w`.
    pub w0: f64,
}

impl WeightVector {
    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.w.is_empty() {
            0.0
        } else {
            self.w.iter().sum::<f64>() / self.w.len() as f64
        }
    }

    /// Entries of the retained cells, in reduced order.
    pub fn restrict(&self, retained: &RetainedCells) -> Result<WeightVector> {
        let w = retained
            .cells()
            .iter()
            .map(|c| {
                self.w.get(c.0).copied().ok_or(Error::InvalidCell {
                    index: c.0,
                    n_cells: self.w.len(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(WeightVector { w, ..*self })
    }

    /// Adds `w0` to every weight.
    pub fn apply_offset(&self, w0: f64) -> Result<WeightVector> {
        if !(w0.is_finite() && w0 >= 0.0) {
            return Err(Error::InvalidParameter(format!("offset must be non-negative, got {w0}")));
        }
        Ok(WeightVector {
            w: self.w.iter().map(|w| w + w0).collect(),
            w0: self.w0 + w0,
            ..*self
        })
    }

    /// Offset of `multiple` times the magnitude of the mean weight.
    pub fn offset_for_multiple(&self, multiple: f64) -> f64 {
        multiple * self.mean().abs()
    }

    pub fn write_csv<W: Write>(&self, cells: &[CellId], mut out: W) -> Result<()> {
        if cells.len() != self.w.len() {
            return Err(Error::DimensionMismatch {
                expected: self.w.len(),
                got: cells.len(),
            });
        }
        writeln!(out, "# h={}", self.h)?;
        writeln!(out, "# delta={}", self.delta)?;
        writeln!(out, "# k_slots={}", self.k_slots)?;
        writeln!(out, "# w0={}", self.w0)?;
        writeln!(out, "cell_index,weight")?;
        let mut rows: Vec<(CellId, f64)> = cells.iter().copied().zip(self.w.iter().copied()).collect();
        rows.sort_by_key(|r| r.0);
        for (c, w) in rows {
            writeln!(out, "{},{}", c.0, w)?;
        }
        Ok(())
    }
}

/// Per-cell weights over the full grid:
/// `w_i = (1/k) * sum_s sum_{j=0..h} (j - h) * sum_{z at hop j from i} delta * IN[z, s]`.
pub fn compute_weights(
    demand: &DemandMatrix,
    net: &CellNetwork,
    h: usize,
    delta: f64,
    slots: &[u32],
) -> Result<WeightVector> {
    if slots.is_empty() {
        return Err(Error::InvalidParameter("slot list is empty".into()));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0,1], got {delta}")));
    }
    if demand.n_cells() != net.n_cells() {
        return Err(Error::DimensionMismatch {
            expected: net.n_cells(),
            got: demand.n_cells(),
        });
    }
    // A slot listed twice is counted twice, like a repeated term in the sum.
    let mut slot_mult = vec![0u64; demand.n_slots() as usize];
    for &s in slots {
        let m = slot_mult.get_mut(s as usize).ok_or_else(|| {
            Error::InvalidParameter(format!("slot {s} outside [0, {})", demand.n_slots()))
        })?;
        *m += 1;
    }
    let mut summed = vec![0u64; net.n_cells()];
    for (c, s, n) in demand.iter() {
        summed[c.0] += n * slot_mult[s as usize];
    }

    let k = slots.len();
    let mut w = vec![0.0; net.n_cells()];
    for (z, &load) in summed.iter().enumerate() {
        if load == 0 {
            continue;
        }
        let term = delta * load as f64;
        net.for_each_within(CellId(z), h, |i, j| {
            w[i.0] += (j as f64 - h as f64) * term;
        });
    }
    for wi in &mut w {
        *wi /= k as f64;
    }
    Ok(WeightVector {
        w,
        delta,
        h,
        k_slots: k,
        w0: 0.0,
    })
}

/// Minimum number of covering stations per cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapacityVector {
    pub k: Vec<u32>,
    /// EVs a single station serves at a time.
    pub n_c: u32,
}

impl CapacityVector {
    /// Unit multiplicities, the uncapacitated case.
    pub fn unit(len: usize) -> Self {
        CapacityVector {
            k: vec![1; len],
            n_c: u32::MAX,
        }
    }

    pub fn restrict(&self, retained: &RetainedCells) -> Result<CapacityVector> {
        let k = retained
            .cells()
            .iter()
            .map(|c| {
                self.k.get(c.0).copied().ok_or(Error::InvalidCell {
                    index: c.0,
                    n_cells: self.k.len(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(CapacityVector { k, n_c: self.n_c })
    }
}

/// `k_i = ceil(max_t IN[i, t] / n_c)`, floored at one.
pub fn capacity_requirements(demand: &DemandMatrix, n_c: u32) -> Result<CapacityVector> {
    if n_c == 0 {
        return Err(Error::InvalidParameter("station capacity must be at least 1".into()));
    }
    let k = demand
        .cell_peaks()
        .into_iter()
        .map(|peak| (peak.div_ceil(n_c as u64) as u32).max(1))
        .collect();
    Ok(CapacityVector { k, n_c })
}

/// Cells kept in the optimisation problem and the maps between full-grid and
/// reduced indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetainedCells {
    to_full: Vec<CellId>,
    to_reduced: Vec<Option<u32>>,
}

impl RetainedCells {
    /// `cells` must be distinct and inside a grid of `n_cells` cells; they are
    /// sorted by index.
    pub fn new(n_cells: usize, mut cells: Vec<CellId>) -> Result<Self> {
        cells.sort_unstable();
        let mut to_reduced = vec![None; n_cells];
        for (k, c) in cells.iter().enumerate() {
            let slot = to_reduced.get_mut(c.0).ok_or(Error::InvalidCell {
                index: c.0,
                n_cells,
            })?;
            if slot.is_some() {
                return Err(Error::InvalidParameter(format!("cell {c} retained twice")));
            }
            *slot = Some(k as u32);
        }
        Ok(RetainedCells {
            to_full: cells,
            to_reduced,
        })
    }

    pub fn all(n_cells: usize) -> Self {
        RetainedCells {
            to_full: (0..n_cells).map(CellId).collect(),
            to_reduced: (0..n_cells).map(|i| Some(i as u32)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.to_full.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_full.is_empty()
    }

    pub fn n_full(&self) -> usize {
        self.to_reduced.len()
    }

    pub fn cells(&self) -> &[CellId] {
        &self.to_full
    }

    pub fn full(&self, reduced: usize) -> CellId {
        self.to_full[reduced]
    }

    pub fn reduced(&self, full: CellId) -> Option<usize> {
        self.to_reduced.get(full.0).copied().flatten().map(|r| r as usize)
    }
}

/// Keeps exactly the cells with positive total demand.
pub fn prune_zero_demand(demand: &DemandMatrix, net: &CellNetwork) -> Result<RetainedCells> {
    if demand.n_cells() != net.n_cells() {
        return Err(Error::DimensionMismatch {
            expected: net.n_cells(),
            got: demand.n_cells(),
        });
    }
    let cells: Vec<CellId> = demand
        .cell_totals()
        .iter()
        .enumerate()
        .filter(|&(_, &t)| t > 0)
        .map(|(i, _)| CellId(i))
        .collect();
    if cells.is_empty() {
        return Err(Error::EmptyProblem);
    }
    RetainedCells::new(net.n_cells(), cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_network, GridSpec};

    fn clock(n_slots: u32) -> SlotClock {
        SlotClock::new(0, 1800, n_slots).unwrap()
    }

    fn line(values: &[u64]) -> (CellNetwork, DemandMatrix) {
        let net = build_network(GridSpec::with_dims(values.len(), 1).unwrap()).unwrap();
        let mut d = DemandMatrix::new(values.len(), clock(1));
        for (i, &v) in values.iter().enumerate() {
            d.add(CellId(i), 0, v).unwrap();
        }
        (net, d)
    }

    #[test]
    fn battery_levels() {
        let b = BatteryParams::default();
        assert_eq!(b.battery_level(0.0).unwrap(), 1.0);
        assert_eq!(b.battery_level(150.0).unwrap(), 0.0);
        assert!((b.battery_level(75.0).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(b.battery_level(400.0).unwrap(), 0.0);
        assert!(b.battery_level(-1.0).is_err());
        assert!((b.range_km() - 150.0).abs() < 1e-9);
        assert!(BatteryParams::new(0.0, 1.0).is_err());
        assert!(BatteryParams::new(0.01, 1.5).is_err());
    }

    #[test]
    fn weights_on_line() {
        let (net, d) = line(&[0, 4, 0]);
        let w = compute_weights(&d, &net, 1, 1.0, &[0]).unwrap();
        assert_eq!(w.w, vec![0.0, -4.0, 0.0]);
        let w0 = compute_weights(&d, &net, 0, 1.0, &[0]).unwrap();
        assert!(w0.w.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn weights_linear_in_delta() {
        let (net, d) = line(&[3, 1, 0, 2, 5]);
        let a = compute_weights(&d, &net, 2, 0.25, &[0]).unwrap();
        let b = compute_weights(&d, &net, 2, 0.5, &[0]).unwrap();
        for (x, y) in a.w.iter().zip(&b.w) {
            assert!((2.0 * x - y).abs() < 1e-12);
            assert!(*x <= 0.0);
        }
    }

    #[test]
    fn weights_reject_bad_inputs() {
        let (net, d) = line(&[1, 2]);
        assert!(compute_weights(&d, &net, 1, 0.0, &[0]).is_err());
        assert!(compute_weights(&d, &net, 1, 1.5, &[0]).is_err());
        assert!(compute_weights(&d, &net, 1, 0.5, &[]).is_err());
        assert!(compute_weights(&d, &net, 1, 0.5, &[3]).is_err());
    }

    #[test]
    fn capacity_ceilings() {
        let net = build_network(GridSpec::with_dims(3, 1).unwrap()).unwrap();
        let mut d = DemandMatrix::new(3, clock(2));
        d.add(CellId(0), 0, 7).unwrap();
        d.add(CellId(0), 1, 2).unwrap();
        d.add(CellId(1), 1, 6).unwrap();
        let cap = capacity_requirements(&d, 3).unwrap();
        assert_eq!(cap.k, vec![3, 2, 1]);
        assert!(capacity_requirements(&d, 0).is_err());
        let retained = prune_zero_demand(&d, &net).unwrap();
        assert_eq!(cap.restrict(&retained).unwrap().k, vec![3, 2]);
    }

    #[test]
    fn offsets() {
        let w = WeightVector {
            w: vec![-4.0, 0.0],
            delta: 1.0,
            h: 1,
            k_slots: 1,
            w0: 0.0,
        };
        assert_eq!(w.apply_offset(0.0).unwrap(), w);
        let shifted = w.apply_offset(1.0).unwrap();
        assert_eq!(shifted.w, vec![-3.0, 1.0]);
        assert_eq!(shifted.w0, 1.0);
        assert_eq!(w.offset_for_multiple(25.0), 50.0);
        assert!(w.apply_offset(-1.0).is_err());
    }

    #[test]
    fn pruning() {
        let (net, d) = line(&[0, 4, 0]);
        let r = prune_zero_demand(&d, &net).unwrap();
        assert_eq!(r.cells(), &[CellId(1)]);
        assert_eq!(r.reduced(CellId(1)), Some(0));
        assert_eq!(r.reduced(CellId(0)), None);

        let (net, d) = line(&[1, 2, 3]);
        let r = prune_zero_demand(&d, &net).unwrap();
        assert_eq!(r, RetainedCells::all(3));
        for k in 0..r.len() {
            assert_eq!(r.reduced(r.full(k)), Some(k));
        }

        let (net, d) = line(&[0, 0]);
        assert!(matches!(prune_zero_demand(&d, &net), Err(Error::EmptyProblem)));
    }

    #[test]
    fn demand_csv_round_trip() {
        let mut d = DemandMatrix::new(10, SlotClock::new(1_000, 1800, 48).unwrap());
        d.add(CellId(7), 3, 2).unwrap();
        d.add(CellId(2), 40, 1).unwrap();
        d.add(CellId(2), 5, 4).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("cell_index,slot_index,count\n2,5,4\n2,40,1\n7,3,2\n"));
        let back = DemandMatrix::read_csv(&buf[..]).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn demand_rejects_out_of_range() {
        let mut d = DemandMatrix::new(3, clock(2));
        assert!(d.add(CellId(3), 0, 1).is_err());
        assert!(d.add(CellId(0), 2, 1).is_err());
        d.add(CellId(0), 1, 0).unwrap();
        assert!(d.is_zero());
    }

    #[test]
    fn slot_clock() {
        let c = SlotClock::for_days(100, 1800, 1).unwrap();
        assert_eq!(c.n_slots, 48);
        assert_eq!(c.slot_of(99), None);
        assert_eq!(c.slot_of(100), Some(0));
        assert_eq!(c.slot_of(100 + 1799), Some(0));
        assert_eq!(c.slot_of(100 + 1800), Some(1));
        assert_eq!(c.slot_of(100 + 86_400), None);
        assert!(SlotClock::new(0, 0, 1).is_err());
    }
}
