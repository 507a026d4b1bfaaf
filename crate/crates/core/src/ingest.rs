//! Reader for the delimited trace format:
//! `user_id,timestamp,x_km,y_km` (or `user_id,timestamp,lat,lon` with a
//! projection). Timestamps are epoch seconds or ISO-8601; naive ISO times are
//! taken as UTC. Lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, Projection};
use crate::trace::RawRecord;

/// How the two coordinate columns are interpreted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Coordinates {
    /// Planar km in the grid's frame.
    PlanarKm,
    /// Latitude and longitude in degrees, projected before grid lookup.
    LatLon(Projection),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    pub coordinates: Coordinates,
    /// Accepted timestamps, `[start, end)` in epoch seconds.
    pub window: Option<(i64, i64)>,
    /// Largest tolerated fraction of rejected data lines.
    pub max_error_ratio: f64,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            coordinates: Coordinates::PlanarKm,
            window: None,
            max_error_ratio: 0.01,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub data_lines: usize,
    pub accepted: usize,
    pub malformed: usize,
    pub out_of_grid: usize,
    pub out_of_window: usize,
    /// Line numbers of the first few rejected lines.
    pub first_rejected: Vec<usize>,
}

impl IngestReport {
    pub fn rejected(&self) -> usize {
        self.malformed + self.out_of_grid + self.out_of_window
    }
}

/// Records grouped per user, each list sorted by timestamp.
pub type UserRecords = Vec<(String, Vec<RawRecord>)>;

pub fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(t) = s.parse::<i64>() {
        return Some(t);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

pub fn read_records<R: Read>(input: R, grid: &GridSpec, opts: &IngestOptions) -> Result<(UserRecords, IngestReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(input);

    let mut report = IngestReport::default();
    let mut users: BTreeMap<String, Vec<RawRecord>> = BTreeMap::new();
    let reject = |report: &mut IngestReport, line: usize| {
        if report.first_rejected.len() < 10 {
            report.first_rejected.push(line);
        }
    };

    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        if report.data_lines == 0 && row.get(0) == Some("user_id") {
            continue;
        }
        report.data_lines += 1;
        if row.len() != 4 || row[0].is_empty() {
            report.malformed += 1;
            reject(&mut report, line);
            continue;
        }
        let (Some(ts), Ok(a), Ok(b)) = (
            parse_timestamp(&row[1]),
            row[2].parse::<f64>(),
            row[3].parse::<f64>(),
        ) else {
            report.malformed += 1;
            reject(&mut report, line);
            continue;
        };
        if let Some((w0, w1)) = opts.window {
            if ts < w0 || ts >= w1 {
                report.out_of_window += 1;
                reject(&mut report, line);
                continue;
            }
        }
        let (x, y) = match opts.coordinates {
            Coordinates::PlanarKm => (a, b),
            Coordinates::LatLon(p) => p.project(a, b),
        };
        let Ok(cell) = grid.cell_at(x, y) else {
            report.out_of_grid += 1;
            reject(&mut report, line);
            continue;
        };
        report.accepted += 1;
        users.entry(row[0].to_string()).or_default().push(RawRecord {
            user_id: row[0].to_string(),
            timestamp: ts,
            cell,
        });
    }

    if report.data_lines > 0 {
        let ratio = report.rejected() as f64 / report.data_lines as f64;
        if ratio > opts.max_error_ratio {
            return Err(Error::TooManyBadLines {
                bad: report.rejected(),
                total: report.data_lines,
                max_ratio: opts.max_error_ratio,
            });
        }
    }

    let users = users
        .into_iter()
        .map(|(u, mut recs)| {
            recs.sort_by_key(|r| r.timestamp);
            (u, recs)
        })
        .collect();
    Ok((users, report))
}

/// Writes records in the planar ingest format, one per line, at the given
/// planar coordinates.
pub fn write_record_line<W: Write>(out: &mut W, user: &str, t: i64, x: f64, y: f64) -> Result<()> {
    writeln!(out, "{user},{t},{x:.4},{y:.4}")?;
    Ok(())
}
