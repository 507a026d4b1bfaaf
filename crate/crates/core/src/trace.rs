//! Per-user trace processing: record reduction, home detection and long-trip
//! arrival counting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::{DemandMatrix, SlotClock};
use crate::error::{Error, Result};
use crate::grid::{CellId, GridSpec};

const DAY: i64 = 86_400;

/// One located phone event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRecord {
    pub user_id: String,
    /// Epoch seconds, UTC.
    pub timestamp: i64,
    pub cell: CellId,
}

/// Continuous presence in one cell, `[t_start, t_end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StayTuple {
    pub cell: CellId,
    pub t_start: i64,
    pub t_end: i64,
}

impl StayTuple {
    pub fn duration(&self) -> i64 {
        self.t_end - self.t_start
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceLog {
    pub user_id: String,
    pub stays: Vec<StayTuple>,
    pub home: Option<CellId>,
}

/// Collapses maximal runs of same-cell records into stays spanning the first
/// and last timestamp of the run.
pub fn reduce_records(records: &[RawRecord]) -> Result<Vec<StayTuple>> {
    let mut stays: Vec<StayTuple> = Vec::new();
    for (i, rec) in records.iter().enumerate() {
        if i > 0 && rec.timestamp < records[i - 1].timestamp {
            return Err(Error::UnsortedRecords { position: i });
        }
        match stays.last_mut() {
            Some(last) if last.cell == rec.cell => last.t_end = rec.timestamp,
            _ => stays.push(StayTuple {
                cell: rec.cell,
                t_start: rec.timestamp,
                t_end: rec.timestamp,
            }),
        }
    }
    Ok(stays)
}

/// Daily local-time window used for home detection. Wraps midnight when
/// `start_s > end_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NightWindow {
    /// Seconds after local midnight at which the window opens.
    pub start_s: i64,
    /// Seconds after local midnight at which the window closes.
    pub end_s: i64,
    /// Fixed offset of local time from UTC, in seconds.
    pub utc_offset_s: i64,
}

impl Default for NightWindow {
    fn default() -> Self {
        NightWindow {
            start_s: 20 * 3600,
            end_s: 6 * 3600,
            utc_offset_s: 0,
        }
    }
}

impl NightWindow {
    pub fn from_hours(start_hour: u32, end_hour: u32, utc_offset_s: i64) -> Result<Self> {
        if start_hour > 24 || end_hour > 24 || start_hour == end_hour {
            return Err(Error::InvalidParameter(format!(
                "bad night window {start_hour}:00-{end_hour}:00"
            )));
        }
        Ok(NightWindow {
            start_s: start_hour as i64 * 3600,
            end_s: end_hour as i64 * 3600,
            utc_offset_s,
        })
    }

    fn span(&self) -> i64 {
        if self.start_s < self.end_s {
            self.end_s - self.start_s
        } else {
            DAY - self.start_s + self.end_s
        }
    }

    /// Overlap of the closed UTC interval `[t0, t1]` with the window, or
    /// `None` when they do not meet at all.
    pub fn overlap(&self, t0: i64, t1: i64) -> Option<i64> {
        let (l0, l1) = (t0 + self.utc_offset_s, t1 + self.utc_offset_s);
        let first_day = (l0 - self.span()).div_euclid(DAY) - 1;
        let last_day = l1.div_euclid(DAY);
        let mut total = 0;
        let mut touched = false;
        for d in first_day..=last_day {
            let ws = d * DAY + self.start_s;
            let we = ws + self.span();
            let lo = l0.max(ws);
            let hi = l1.min(we);
            if lo < we && lo <= hi {
                touched = true;
                total += hi - lo;
            }
        }
        touched.then_some(total)
    }
}

/// Cell with the largest cumulative stay time inside the nightly window.
/// Ties go to the lower cell index.
pub fn detect_home(stays: &[StayTuple], window: &NightWindow) -> Option<CellId> {
    detect_home_in(stays, window, None)
}

/// As [`detect_home`], considering only time inside `period = [start, end)`.
pub fn detect_home_in(
    stays: &[StayTuple],
    window: &NightWindow,
    period: Option<(i64, i64)>,
) -> Option<CellId> {
    let mut totals: std::collections::BTreeMap<CellId, i64> = Default::default();
    for s in stays {
        let (mut t0, mut t1) = (s.t_start, s.t_end);
        if let Some((p0, p1)) = period {
            t0 = t0.max(p0);
            t1 = t1.min(p1 - 1);
            if t0 > t1 {
                continue;
            }
        }
        if let Some(o) = window.overlap(t0, t1) {
            *totals.entry(s.cell).or_insert(0) += o;
        }
    }
    let mut best: Option<(CellId, i64)> = None;
    for (cell, t) in totals {
        if best.is_none_or(|(_, bt)| t > bt) {
            best = Some((cell, t));
        }
    }
    best.map(|(c, _)| c)
}

/// Thresholds for counting a charging-relevant arrival.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrivalParams {
    /// Minimum stay, in seconds, that counts as a charging opportunity.
    pub tau_min_s: i64,
    /// Minimum distance since the last charging opportunity, in km.
    pub l_min_km: f64,
}

impl Default for ArrivalParams {
    fn default() -> Self {
        ArrivalParams {
            tau_min_s: 1800,
            l_min_km: 100.0,
        }
    }
}

impl ArrivalParams {
    pub fn validate(&self) -> Result<()> {
        if self.tau_min_s < 0 {
            return Err(Error::InvalidParameter(format!(
                "tau_min must be non-negative, got {}",
                self.tau_min_s
            )));
        }
        if !(self.l_min_km.is_finite() && self.l_min_km >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "l_min must be non-negative, got {}",
                self.l_min_km
            )));
        }
        Ok(())
    }
}

/// A counted arrival: the qualifying stay and the distance driven to reach it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub cell: CellId,
    pub t_arrival: i64,
    pub trip_km: f64,
}

/// Walks the stays, accumulating Manhattan distance between consecutive cells.
/// A stay of at least `tau_min` is a charging opportunity and resets the
/// accumulator; it is counted when it is not at home and the accumulated
/// distance reached `l_min`.
pub fn find_arrivals(trace: &TraceLog, grid: &GridSpec, params: &ArrivalParams) -> Result<Vec<Arrival>> {
    let mut out = Vec::new();
    let mut hops: usize = 0;
    for (p, stay) in trace.stays.iter().enumerate() {
        grid.check_cell(stay.cell)?;
        if p > 0 {
            hops += grid.hop_distance(trace.stays[p - 1].cell, stay.cell);
        }
        if stay.duration() < params.tau_min_s {
            continue;
        }
        let km = hops as f64 * grid.cell_size;
        if Some(stay.cell) != trace.home && km >= params.l_min_km {
            out.push(Arrival {
                cell: stay.cell,
                t_arrival: stay.t_start,
                trip_km: km,
            });
        }
        hops = 0;
    }
    Ok(out)
}

/// One user's contribution to the demand matrix.
pub fn count_arrivals(
    trace: &TraceLog,
    grid: &GridSpec,
    params: &ArrivalParams,
    clock: &SlotClock,
) -> Result<DemandMatrix> {
    let mut m = DemandMatrix::new(grid.n_cells(), *clock);
    for a in find_arrivals(trace, grid, params)? {
        let slot = clock.slot_of(a.t_arrival).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "arrival at t={} outside the study window",
                a.t_arrival
            ))
        })?;
        m.add(a.cell, slot, 1)?;
    }
    Ok(m)
}

/// Sum of all users' contributions. Users are processed in parallel; the
/// merge is a commutative sum so the result does not depend on input order.
pub fn build_demand(
    traces: &[TraceLog],
    grid: &GridSpec,
    params: &ArrivalParams,
    clock: &SlotClock,
) -> Result<DemandMatrix> {
    params.validate()?;
    traces
        .par_iter()
        .map(|t| count_arrivals(t, grid, params, clock))
        .try_reduce(
            || DemandMatrix::new(grid.n_cells(), *clock),
            |mut a, b| {
                a.merge(&b)?;
                Ok(a)
            },
        )
}

/// Settings for turning per-user records into home-annotated stay logs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSettings {
    pub night: NightWindow,
    /// Period `[start, end)` over which home is detected; whole trace when `None`.
    pub home_period: Option<(i64, i64)>,
    /// Drop users without a detectable home instead of keeping them with no home.
    pub exclude_homeless: bool,
}

impl Default for TraceSettings {
    fn default() -> Self {
        TraceSettings {
            night: NightWindow::default(),
            home_period: None,
            exclude_homeless: false,
        }
    }
}

/// Reduces each user's records and annotates the home cell. Output is sorted
/// by user id.
pub fn build_trace_logs(
    users: Vec<(String, Vec<RawRecord>)>,
    settings: &TraceSettings,
) -> Result<Vec<TraceLog>> {
    let mut logs: Vec<TraceLog> = users
        .into_par_iter()
        .map(|(user_id, records)| {
            let stays = reduce_records(&records)?;
            let home = detect_home_in(&stays, &settings.night, settings.home_period);
            Ok(TraceLog {
                user_id,
                stays,
                home,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if settings.exclude_homeless {
        logs.retain(|l| l.home.is_some());
    }
    logs.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    Ok(logs)
}
