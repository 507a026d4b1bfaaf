//! Run configuration: a TOML file with `[grid]`, `[pipeline]`, `[solver]`,
//! `[synth]` and `[paths]` sections. Every key is optional.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use evplace::grid::{GridSpec, Projection};
use evplace::ingest::{Coordinates, IngestOptions};
use evplace::solvers::{CrossoverCost, GaParams, SeedMethod};
use evplace::synth::{Blob, Sampling, SynthConfig};
use evplace::trace::{ArrivalParams, NightWindow, TraceSettings};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const DAY: i64 = 86_400;

/// Marks errors caused by configuration or usage, reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoordinateKind {
    Planar,
    LatLon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Greedy,
    Stochastic,
    Ga,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size_km: f64,
    pub nx: usize,
    pub ny: usize,
    pub coordinates: CoordinateKind,
    pub ref_lat: f64,
    pub ref_lon: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            origin_x: 0.0,
            origin_y: 0.0,
            cell_size_km: 0.5,
            nx: 40,
            ny: 40,
            coordinates: CoordinateKind::Planar,
            ref_lat: 0.0,
            ref_lon: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub tau_min_s: i64,
    pub l_min_km: f64,
    pub slot_s: i64,
    pub delta: f64,
    pub night_start_hour: u32,
    pub night_end_hour: u32,
    pub utc_offset_s: i64,
    /// Epoch seconds of the first study day.
    pub study_start: i64,
    pub days: u32,
    /// Days from the study start used to detect homes.
    pub home_days: u32,
    pub exclude_homeless: bool,
    /// Vehicles one station serves at a time; uncapacitated when absent.
    pub capacity: Option<u32>,
    pub max_error_ratio: f64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            tau_min_s: 1800,
            l_min_km: 100.0,
            slot_s: 3600,
            delta: 0.25,
            night_start_hour: 20,
            night_end_hour: 6,
            utc_offset_s: 0,
            study_start: 1_246_838_400,
            days: 7,
            home_days: 7,
            exclude_homeless: false,
            capacity: None,
            max_error_ratio: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub kind: SolverKind,
    pub h: usize,
    pub w0_multiple: f64,
    pub population: usize,
    pub iterations: usize,
    pub elite_k: usize,
    pub tournament: usize,
    pub seed_method: SeedMethod,
    pub crossover_cost: CrossoverCost,
    pub seed: u64,
    /// Independent runs with seeds `seed, seed + 1, ...`; the best is kept.
    pub runs: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let ga = GaParams::default();
        SolverSection {
            kind: SolverKind::Ga,
            h: 2,
            w0_multiple: 0.0,
            population: ga.population_size,
            iterations: ga.iterations,
            elite_k: ga.elite_k,
            tournament: ga.tournament_size,
            seed_method: ga.seed_method,
            crossover_cost: ga.crossover_cost,
            seed: 0,
            runs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_users: usize,
    pub long_trip_rate: f64,
    pub background: f64,
    pub trip_shape: f64,
    pub trip_cap_factor: f64,
    pub median_inter_event_min: f64,
    pub sampling: Sampling,
    pub home_blobs: Vec<Blob>,
    pub seed: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        SynthSection {
            n_users: s.n_users,
            long_trip_rate: s.long_trip_rate,
            background: s.background,
            trip_shape: s.trip_shape,
            trip_cap_factor: s.trip_cap_factor,
            median_inter_event_min: s.median_inter_event_min,
            sampling: s.sampling,
            home_blobs: s.home_blobs,
            seed: s.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub output_dir: PathBuf,
    pub traces: Option<PathBuf>,
    pub ledger: Option<PathBuf>,
    pub demand: Option<PathBuf>,
    pub layout: Option<PathBuf>,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            output_dir: PathBuf::from("out"),
            traces: None,
            ledger: None,
            demand: None,
            layout: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub pipeline: PipelineSection,
    pub solver: SolverSection,
    pub synth: SynthSection,
    pub paths: PathsSection,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| config_error(format!("invalid config {}: {e}", path.display())))
    }

    /// SHA-256 of the effective configuration, file locations excluded.
    pub fn hash(&self) -> String {
        let params = RunConfig {
            paths: PathsSection::default(),
            ..self.clone()
        };
        let canonical = serde_json::to_string(&params).expect("config serialises");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let g = &self.grid;
        GridSpec::new(g.origin_x, g.origin_y, g.cell_size_km, g.nx, g.ny).map_err(|e| config_error(e.to_string()))
    }

    pub fn arrival(&self) -> ArrivalParams {
        ArrivalParams {
            tau_min_s: self.pipeline.tau_min_s,
            l_min_km: self.pipeline.l_min_km,
        }
    }

    pub fn study_window(&self) -> (i64, i64) {
        let p = &self.pipeline;
        (p.study_start, p.study_start + p.days as i64 * DAY)
    }

    pub fn trace_settings(&self) -> Result<TraceSettings> {
        let p = &self.pipeline;
        let night = NightWindow::from_hours(p.night_start_hour, p.night_end_hour, p.utc_offset_s)
            .map_err(|e| config_error(e.to_string()))?;
        let home_end = p.study_start + p.home_days.min(p.days) as i64 * DAY;
        Ok(TraceSettings {
            night,
            home_period: Some((p.study_start, home_end)),
            exclude_homeless: p.exclude_homeless,
        })
    }

    pub fn ingest_options(&self) -> IngestOptions {
        let coordinates = match self.grid.coordinates {
            CoordinateKind::Planar => Coordinates::PlanarKm,
            CoordinateKind::LatLon => Coordinates::LatLon(Projection {
                ref_lat: self.grid.ref_lat,
                ref_lon: self.grid.ref_lon,
            }),
        };
        IngestOptions {
            coordinates,
            window: Some(self.study_window()),
            max_error_ratio: self.pipeline.max_error_ratio,
        }
    }

    pub fn ga_params(&self, seed: u64) -> GaParams {
        let s = &self.solver;
        GaParams {
            population_size: s.population,
            iterations: s.iterations,
            elite_k: s.elite_k,
            tournament_size: s.tournament,
            seed_method: s.seed_method,
            crossover_cost: s.crossover_cost,
            seed,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            n_users: s.n_users,
            days: self.pipeline.days,
            study_start: self.pipeline.study_start,
            slot_s: self.pipeline.slot_s,
            home_blobs: s.home_blobs.clone(),
            background: s.background,
            long_trip_rate: s.long_trip_rate,
            trip_shape: s.trip_shape,
            trip_cap_factor: s.trip_cap_factor,
            median_inter_event_min: s.median_inter_event_min,
            sampling: s.sampling,
            arrival: self.arrival(),
            seed: s.seed,
        }
    }

    /// Checks every parameter range before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.grid_spec()?;
        let p = &self.pipeline;
        let wrap = |r: evplace::Result<()>| r.map_err(|e| config_error(e.to_string()));
        wrap(self.arrival().validate())?;
        if p.days == 0 {
            return Err(config_error("pipeline.days must be at least 1"));
        }
        if p.slot_s <= 0 || DAY % p.slot_s != 0 {
            return Err(config_error(format!("pipeline.slot_s must divide a day, got {}", p.slot_s)));
        }
        if !(p.delta > 0.0 && p.delta <= 1.0) {
            return Err(config_error(format!("pipeline.delta must lie in (0, 1], got {}", p.delta)));
        }
        if !(0.0..=1.0).contains(&p.max_error_ratio) {
            return Err(config_error("pipeline.max_error_ratio must lie in [0, 1]"));
        }
        if p.capacity == Some(0) {
            return Err(config_error("pipeline.capacity must be at least 1"));
        }
        self.trace_settings()?;
        let s = &self.solver;
        if !(s.w0_multiple.is_finite() && s.w0_multiple >= 0.0) {
            return Err(config_error("solver.w0_multiple must be non-negative"));
        }
        if s.runs == 0 {
            return Err(config_error("solver.runs must be at least 1"));
        }
        wrap(self.ga_params(s.seed).validate())?;
        wrap(self.synth_config().validate())?;
        Ok(())
    }

    pub fn out_path(&self, explicit: &Option<PathBuf>, default_name: &str) -> PathBuf {
        explicit
            .clone()
            .unwrap_or_else(|| self.paths.output_dir.join(default_name))
    }

    pub fn traces_path(&self) -> PathBuf {
        self.out_path(&self.paths.traces, "traces.csv")
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.out_path(&self.paths.ledger, "ledger.csv")
    }

    pub fn demand_path(&self) -> PathBuf {
        self.out_path(&self.paths.demand, "demand.csv")
    }

    pub fn layout_path(&self) -> PathBuf {
        self.out_path(&self.paths.layout, "layout.csv")
    }
}

/// Fails with a configuration error unless `path` exists.
pub fn require_input(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(config_error(format!("{what} not found: {}", path.display())));
    }
    Ok(())
}

pub fn create_output_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
