//! Synthetic mobility traces with a planted ground truth.
//!
//! Every user lives in a home cell drawn from a mixture of Gaussian blobs and
//! spends each night there. On ordinary days the user commutes to a nearby
//! work cell. On long-trip days the user drives a zigzag route of short
//! stops whose Manhattan length is at least `l_min`, stays one to three hours
//! at a destination and drives home. The ledger lists every home and every
//! long-trip arrival, which is exactly what the demand pipeline should count
//! when records are dense.

use std::io::{BufRead, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Pareto};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::{DemandMatrix, SlotClock};
use crate::error::{Error, Result};
use crate::grid::{CellId, GridSpec};
use crate::ingest::UserRecords;
use crate::trace::{ArrivalParams, RawRecord};

const DAY: i64 = 86_400;
const HOUR: i64 = 3_600;
const MINUTE: i64 = 60;
/// Driving time between consecutive stops of a long trip.
const LEG_S: i64 = 5 * MINUTE;
/// Most stops a single long trip may need.
pub const MAX_LEGS: usize = 120;

/// Gaussian bump in fractional grid coordinates (`0..1` on both axes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub fx: f64,
    pub fy: f64,
    pub sigma: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Records at the start and end of every stop and hourly inside it.
    Dense,
    /// Records at log-normally spaced instants only.
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub days: u32,
    /// Epoch seconds of the first midnight (UTC).
    pub study_start: i64,
    pub slot_s: i64,
    pub home_blobs: Vec<Blob>,
    /// Share of destination density spread uniformly over the grid.
    pub background: f64,
    /// Probability that a user-day contains a long trip.
    pub long_trip_rate: f64,
    /// Pareto shape of long-trip lengths; the scale is `l_min`.
    pub trip_shape: f64,
    /// Long trips are capped at `trip_cap_factor * l_min`.
    pub trip_cap_factor: f64,
    /// Median gap between records in sparse mode, in minutes.
    pub median_inter_event_min: f64,
    pub sampling: Sampling,
    pub arrival: ArrivalParams,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 1000,
            days: 7,
            study_start: 1_246_838_400,
            slot_s: HOUR,
            home_blobs: vec![
                Blob {
                    fx: 0.5,
                    fy: 0.5,
                    sigma: 0.12,
                    weight: 3.0,
                },
                Blob {
                    fx: 0.25,
                    fy: 0.7,
                    sigma: 0.08,
                    weight: 1.0,
                },
                Blob {
                    fx: 0.75,
                    fy: 0.3,
                    sigma: 0.08,
                    weight: 1.0,
                },
            ],
            background: 0.3,
            long_trip_rate: 0.15,
            trip_shape: 2.5,
            trip_cap_factor: 3.0,
            median_inter_event_min: 84.0,
            sampling: Sampling::Dense,
            arrival: ArrivalParams::default(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.days == 0 {
            return bad("days must be at least 1".into());
        }
        if self.slot_s <= 0 || DAY % self.slot_s != 0 {
            return bad(format!("slot length must divide a day, got {}", self.slot_s));
        }
        if !(0.0..=1.0).contains(&self.long_trip_rate) {
            return bad(format!("long_trip_rate must lie in [0, 1], got {}", self.long_trip_rate));
        }
        if !(0.0..=1.0).contains(&self.background) {
            return bad(format!("background must lie in [0, 1], got {}", self.background));
        }
        if !(self.trip_shape > 0.0) {
            return bad(format!("trip_shape must be positive, got {}", self.trip_shape));
        }
        if !(self.trip_cap_factor >= 1.0) {
            return bad(format!("trip_cap_factor must be at least 1, got {}", self.trip_cap_factor));
        }
        if !(self.median_inter_event_min > 0.0) {
            return bad("median_inter_event_min must be positive".into());
        }
        if self
            .home_blobs
            .iter()
            .any(|b| !(b.sigma > 0.0) || !(b.weight >= 0.0) || !b.fx.is_finite() || !b.fy.is_finite())
        {
            return bad("blob sigmas must be positive and weights non-negative".into());
        }
        if !self.home_blobs.iter().any(|b| b.weight > 0.0) {
            return bad("at least one home blob needs positive weight".into());
        }
        self.arrival.validate()?;
        if self.arrival.tau_min_s < LEG_S || self.arrival.tau_min_s > HOUR - 2 * MINUTE {
            return bad(format!(
                "tau_min must lie in [{LEG_S}, {}] s for generated stays, got {}",
                HOUR - 2 * MINUTE,
                self.arrival.tau_min_s
            ));
        }
        if !(self.arrival.l_min_km > 0.0) {
            return bad("l_min must be positive for generated trips".into());
        }
        Ok(())
    }

    pub fn clock(&self) -> Result<SlotClock> {
        SlotClock::for_days(self.study_start, self.slot_s, self.days)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerTrip {
    pub user: usize,
    pub cell: CellId,
    pub slot: u32,
    pub trip_km: f64,
}

/// Ground truth: every user's home and every planted long-trip arrival.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ledger {
    pub users: Vec<String>,
    pub homes: Vec<CellId>,
    pub trips: Vec<LedgerTrip>,
}

impl Ledger {
    /// Arrival counts implied by the ledger.
    pub fn demand(&self, n_cells: usize, clock: SlotClock) -> Result<DemandMatrix> {
        let mut m = DemandMatrix::new(n_cells, clock);
        for t in &self.trips {
            m.add(t.cell, t.slot, 1)?;
        }
        Ok(m)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "kind,user_id,cell_index,slot_index,trip_km")?;
        for (u, h) in self.users.iter().zip(&self.homes) {
            writeln!(out, "home,{u},{},,", h.0)?;
        }
        for t in &self.trips {
            writeln!(out, "trip,{},{},{},{}", self.users[t.user], t.cell.0, t.slot, t.trip_km)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(input: R) -> Result<Ledger> {
        let mut ledger = Ledger::default();
        let mut index = std::collections::HashMap::new();
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("kind,") {
                continue;
            }
            let err = |m: &str| Error::Parse {
                line: n + 1,
                message: m.to_string(),
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(err("expected 5 fields"));
            }
            let cell = CellId(f[2].parse().map_err(|_| err("bad cell index"))?);
            match f[0] {
                "home" => {
                    index.insert(f[1].to_string(), ledger.users.len());
                    ledger.users.push(f[1].to_string());
                    ledger.homes.push(cell);
                }
                "trip" => {
                    let user = *index.get(f[1]).ok_or_else(|| err("trip before its user's home row"))?;
                    ledger.trips.push(LedgerTrip {
                        user,
                        cell,
                        slot: f[3].parse().map_err(|_| err("bad slot index"))?,
                        trip_km: f[4].parse().map_err(|_| err("bad trip length"))?,
                    });
                }
                _ => return Err(err("unknown row kind")),
            }
        }
        Ok(ledger)
    }
}

/// One user's records as `(timestamp, x_km, y_km)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthUser {
    pub user_id: String,
    pub home: CellId,
    pub records: Vec<(i64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub users: Vec<SynthUser>,
    pub ledger: Ledger,
}

impl SynthOutput {
    /// Records located on `grid`, in the shape produced by the ingest reader.
    pub fn user_records(&self, grid: &GridSpec) -> Result<UserRecords> {
        self.users
            .iter()
            .map(|u| {
                let recs = u
                    .records
                    .iter()
                    .map(|&(t, x, y)| {
                        Ok(RawRecord {
                            user_id: u.user_id.clone(),
                            timestamp: t,
                            cell: grid.cell_at(x, y)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((u.user_id.clone(), recs))
            })
            .collect()
    }

    /// Writes every record in the planar ingest format.
    pub fn write_traces<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "user_id,timestamp,x_km,y_km")?;
        for u in &self.users {
            for &(t, x, y) in &u.records {
                crate::ingest::write_record_line(&mut out, &u.user_id, t, x, y)?;
            }
        }
        Ok(())
    }

    pub fn n_records(&self) -> usize {
        self.users.iter().map(|u| u.records.len()).sum()
    }
}

fn blob_density(grid: &GridSpec, blobs: &[Blob]) -> Vec<f64> {
    (0..grid.n_cells())
        .map(|c| {
            let (r, col) = grid.row_col(CellId(c));
            let fx = (col as f64 + 0.5) / grid.nx as f64;
            let fy = (r as f64 + 0.5) / grid.ny as f64;
            blobs
                .iter()
                .map(|b| {
                    let d2 = (fx - b.fx).powi(2) + (fy - b.fy).powi(2);
                    b.weight * (-d2 / (2.0 * b.sigma * b.sigma)).exp()
                })
                .sum()
        })
        .collect()
}

struct Context<'a> {
    cfg: &'a SynthConfig,
    grid: &'a GridSpec,
    clock: SlotClock,
    homes: WeightedIndex<f64>,
    destinations: WeightedIndex<f64>,
    work_hops: usize,
    half_diameter: usize,
}

impl Context<'_> {
    fn far_waypoint<R: Rng>(&self, cur: CellId, dest: CellId, rng: &mut R) -> CellId {
        let n = self.grid.n_cells();
        for _ in 0..64 {
            let c = CellId(rng.random_range(0..n));
            if c != dest && c != cur && self.grid.hop_distance(cur, c) >= self.half_diameter {
                return c;
            }
        }
        (0..n)
            .map(CellId)
            .filter(|&c| c != dest && c != cur)
            .max_by_key(|&c| (self.grid.hop_distance(cur, c), std::cmp::Reverse(c)))
            .expect("grids used for long trips have at least three cells")
    }

    fn work_cell<R: Rng>(&self, home: CellId, rng: &mut R) -> Option<CellId> {
        let k = self.work_hops as i64;
        let (hr, hc) = self.grid.row_col(home);
        let mut options = Vec::new();
        for dr in -k..=k {
            for dc in -k..=k {
                let d = dr.abs() + dc.abs();
                let (r, c) = (hr as i64 + dr, hc as i64 + dc);
                if d >= 1 && d <= k && r >= 0 && c >= 0 && (r as usize) < self.grid.ny && (c as usize) < self.grid.nx {
                    options.push(self.grid.cell(r as usize, c as usize));
                }
            }
        }
        (!options.is_empty()).then(|| options[rng.random_range(0..options.len())])
    }

    fn trip_hops<R: Rng>(&self, rng: &mut R) -> usize {
        let l = self.cfg.arrival.l_min_km;
        let km = Pareto::new(l, self.cfg.trip_shape)
            .expect("validated")
            .sample(rng)
            .min(self.cfg.trip_cap_factor * l);
        let cs = self.grid.cell_size;
        let mut hops = (km / cs).ceil() as usize;
        while (hops as f64) * cs < km {
            hops += 1;
        }
        hops
    }

    fn user(&self, u: usize) -> Result<(SynthUser, Vec<LedgerTrip>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(u as u64);
        let grid = self.grid;
        let home = CellId(self.homes.sample(&mut rng));
        let work = self.work_cell(home, &mut rng);
        let start = self.cfg.study_start;

        // Contiguous stops as (cell, start time); each lasts until the next.
        let mut stops: Vec<(CellId, i64)> = vec![(home, start)];
        let mut trips = Vec::new();
        for d in 0..self.cfg.days as i64 {
            let midnight = start + d * DAY;
            if self.cfg.long_trip_rate > 0.0 && rng.random_bool(self.cfg.long_trip_rate) {
                let mut dest = CellId(self.destinations.sample(&mut rng));
                while dest == home {
                    dest = CellId(rng.random_range(0..grid.n_cells()));
                }
                let target = self.trip_hops(&mut rng);
                let mut t = midnight + 7 * HOUR + rng.random_range(0..60) * MINUTE;
                let (mut cur, mut acc, mut legs) = (home, 0usize, 0usize);
                while acc + grid.hop_distance(cur, dest) < target {
                    let w = self.far_waypoint(cur, dest, &mut rng);
                    acc += grid.hop_distance(cur, w);
                    stops.push((w, t));
                    t += LEG_S;
                    cur = w;
                    legs += 1;
                    if legs > MAX_LEGS {
                        return Err(Error::InvalidParameter(format!(
                            "grid too small: a {:.1} km trip needs more than {MAX_LEGS} stops",
                            target as f64 * grid.cell_size
                        )));
                    }
                }
                acc += grid.hop_distance(cur, dest);
                stops.push((dest, t));
                trips.push(LedgerTrip {
                    user: u,
                    cell: dest,
                    slot: self.clock.slot_of(t).expect("arrivals fall on the same day"),
                    trip_km: acc as f64 * grid.cell_size,
                });
                let stay = rng.random_range(60..=180) * MINUTE;
                stops.push((home, t + stay));
            } else if let Some(w) = work {
                stops.push((w, midnight + 8 * HOUR + rng.random_range(-30..=30) * MINUTE));
                stops.push((home, midnight + 17 * HOUR + rng.random_range(0..=60) * MINUTE));
            }
        }

        let end = self.clock.study_end();
        let times: Vec<i64> = match self.cfg.sampling {
            Sampling::Dense => dense_times(&stops, end),
            Sampling::Sparse => self.sparse_times(start, end, &mut rng),
        };
        let cs = grid.cell_size;
        let mut records = Vec::with_capacity(times.len());
        let mut k = 0;
        for t in times {
            while k + 1 < stops.len() && stops[k + 1].1 <= t {
                k += 1;
            }
            let (cx, cy) = grid.center(stops[k].0);
            let jx = rng.random_range(-0.4..0.4) * cs;
            let jy = rng.random_range(-0.4..0.4) * cs;
            records.push((t, cx + jx, cy + jy));
        }
        Ok((
            SynthUser {
                user_id: user_id(u),
                home,
                records,
            },
            trips,
        ))
    }

    fn sparse_times<R: Rng>(&self, start: i64, end: i64, rng: &mut R) -> Vec<i64> {
        let median_s = self.cfg.median_inter_event_min * MINUTE as f64;
        let gaps = LogNormal::new(median_s.ln(), 1.0).expect("validated");
        let mut out = Vec::new();
        let mut t = start + rng.random_range(0..HOUR);
        while t < end {
            out.push(t);
            t += (gaps.sample(rng).round() as i64).max(1);
        }
        out
    }
}

/// Record times for dense sampling: the start of every stop, hourly inside
/// it, and one minute before it ends.
fn dense_times(stops: &[(CellId, i64)], end: i64) -> Vec<i64> {
    let mut out = Vec::new();
    for (i, &(_, t0)) in stops.iter().enumerate() {
        let t1 = stops.get(i + 1).map_or(end, |s| s.1);
        let mut t = t0;
        while t < t1 - MINUTE {
            out.push(t);
            t += HOUR;
        }
        if t1 - MINUTE > t0 {
            out.push(t1 - MINUTE);
        } else {
            out.push(t0);
        }
    }
    out
}

pub fn user_id(u: usize) -> String {
    format!("u{u:06}")
}

/// Generates traces and their ledger for `grid`.
pub fn generate(cfg: &SynthConfig, grid: &GridSpec) -> Result<SynthOutput> {
    cfg.validate()?;
    grid.validate()?;
    let clock = cfg.clock()?;
    if cfg.n_users == 0 {
        return Ok(SynthOutput {
            users: Vec::new(),
            ledger: Ledger::default(),
        });
    }
    let cs = grid.cell_size;
    let l_min = cfg.arrival.l_min_km;
    let half_diameter = grid.diameter().div_ceil(2);
    if cfg.long_trip_rate > 0.0 {
        let max_hops = (cfg.trip_cap_factor * l_min / cs).ceil() as usize + 1;
        if grid.n_cells() < 3 || half_diameter == 0 || max_hops / half_diameter + 1 > MAX_LEGS {
            return Err(Error::InvalidParameter(format!(
                "grid too small for {:.1} km trips: {}x{} cells of {cs} km",
                cfg.trip_cap_factor * l_min,
                grid.nx,
                grid.ny
            )));
        }
    }
    let work_limit = (l_min / 2.0).min(10.0);
    let mut work_hops = (work_limit / cs).floor() as usize;
    while work_hops > 0 && work_hops as f64 * cs >= l_min {
        work_hops -= 1;
    }

    let home_density = blob_density(grid, &cfg.home_blobs);
    let home_total: f64 = home_density.iter().sum();
    if !(home_total > 0.0) {
        return Err(Error::InvalidParameter("home density vanishes on this grid".into()));
    }
    let uniform = home_total / grid.n_cells() as f64;
    let dest_density: Vec<f64> = home_density
        .iter()
        .map(|&d| (1.0 - cfg.background) * d + cfg.background * uniform)
        .collect();
    let ctx = Context {
        cfg,
        grid,
        clock,
        homes: WeightedIndex::new(&home_density).map_err(|e| Error::InvalidParameter(e.to_string()))?,
        destinations: WeightedIndex::new(&dest_density).map_err(|e| Error::InvalidParameter(e.to_string()))?,
        work_hops,
        half_diameter,
    };
    let per_user: Vec<(SynthUser, Vec<LedgerTrip>)> =
        (0..cfg.n_users).into_par_iter().map(|u| ctx.user(u)).collect::<Result<_>>()?;

    let mut ledger = Ledger::default();
    let mut users = Vec::with_capacity(per_user.len());
    for (user, trips) in per_user {
        ledger.users.push(user.user_id.clone());
        ledger.homes.push(user.home);
        ledger.trips.extend(trips);
        users.push(user);
    }
    Ok(SynthOutput { users, ledger })
}
