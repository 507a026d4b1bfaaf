use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn evplace(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evplace"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = evplace(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn grid_config(dir: &Path, nx: usize, ny: usize) -> PathBuf {
    write(
        dir,
        "run.toml",
        &format!("[grid]\nnx = {nx}\nny = {ny}\n\n[pipeline]\ndays = 2\nhome_days = 2\n"),
    )
}

/// Two-day demand file with hourly slots.
fn demand_file(dir: &Path, name: &str, n_cells: usize, rows: &[(usize, u32, u64)]) -> PathBuf {
    let mut text = format!(
        "# n_cells={n_cells}\n# study_start=1246838400\n# slot_duration_s=3600\n# n_slots=48\ncell_index,slot_index,count\n"
    );
    for (c, s, n) in rows {
        text.push_str(&format!("{c},{s},{n}\n"));
    }
    write(dir, name, &text)
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(str::to_string)
        .collect()
}

fn stations(path: &Path) -> Vec<usize> {
    data_lines(path).iter().map(|l| l.parse().unwrap()).collect()
}

/// Header and rows of a CSV, comment lines skipped.
fn table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let lines = data_lines(path);
    let split = |l: &String| l.split(',').map(str::to_string).collect::<Vec<_>>();
    (split(&lines[0]), lines[1..].iter().map(split).collect())
}

fn column(header: &[String], row: &[String], name: &str) -> f64 {
    let i = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"));
    row[i].parse().unwrap()
}

const GEN: &[&str] = &["generate", "--users", "120", "--days", "2", "--seed", "5"];

#[test]
fn generate_is_deterministic_and_creates_dirs() {
    let tmp = TempDir::new().unwrap();
    let cfg = grid_config(tmp.path(), 10, 10);
    let cfg = cfg.to_str().unwrap();
    for sub in ["a", "b"] {
        let mut args = vec!["--config", cfg, "--out-dir", sub];
        args.extend_from_slice(GEN);
        ok(tmp.path(), &args);
    }
    for f in ["traces.csv", "ledger.csv"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert!(!a.is_empty());
        assert!(a == b, "{f} differs between identical runs");
    }
}

#[test]
fn jobs_flag_does_not_change_output() {
    let tmp = TempDir::new().unwrap();
    let cfg = grid_config(tmp.path(), 10, 10);
    let cfg = cfg.to_str().unwrap();
    let mut one = vec!["--config", cfg, "--jobs", "1", "--out-dir", "one"];
    one.extend_from_slice(GEN);
    ok(tmp.path(), &one);
    let mut many = vec!["--config", cfg, "--jobs", "3", "--out-dir", "many"];
    many.extend_from_slice(GEN);
    ok(tmp.path(), &many);
    let one = fs::read(tmp.path().join("one/traces.csv")).unwrap();
    let many = fs::read(tmp.path().join("many/traces.csv")).unwrap();
    assert!(one == many, "traces depend on the thread count");
}

#[test]
fn invalid_parameters_exit_with_usage_code() {
    let tmp = TempDir::new().unwrap();
    let out = evplace(tmp.path(), &["generate", "--long-trip-rate", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let out = evplace(tmp.path(), &["solve", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = evplace(tmp.path(), &["solve", "--demand", "missing.csv"]);
    assert_eq!(out.status.code(), Some(2));
    write(tmp.path(), "bad.toml", "[solver]\nmutation_rate = 0.1\n");
    let out = evplace(tmp.path(), &["--config", "bad.toml", "generate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn demand_matches_ledger() {
    let tmp = TempDir::new().unwrap();
    let cfg = grid_config(tmp.path(), 10, 10);
    let cfg = cfg.to_str().unwrap();
    let mut args = vec!["--config", cfg];
    args.extend_from_slice(GEN);
    ok(tmp.path(), &args);
    let out = ok(
        tmp.path(),
        &["--config", cfg, "demand", "--check-ledger", "out/ledger.csv"],
    );
    assert!(String::from_utf8_lossy(&out.stdout).contains("matches ledger"));
    let text = fs::read_to_string(tmp.path().join("out/demand.csv")).unwrap();
    assert!(text.starts_with("# tool=evplace-cli"));
    assert!(text.contains("# config_sha256="));
}

#[test]
fn empty_traces_are_an_empty_problem() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "traces.csv", "user_id,timestamp,x_km,y_km\n");
    let out = evplace(tmp.path(), &["demand", "--traces", "traces.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty problem"));
}

#[test]
fn greedy_on_uniform_line_picks_middle() {
    let tmp = TempDir::new().unwrap();
    let cfg = grid_config(tmp.path(), 3, 1);
    let cfg = cfg.to_str().unwrap();
    demand_file(tmp.path(), "d.csv", 3, &[(0, 0, 1), (1, 0, 1), (2, 0, 1)]);
    ok(
        tmp.path(),
        &["--config", cfg, "solve", "--demand", "d.csv", "--solver", "greedy", "--h", "1"],
    );
    assert_eq!(stations(&tmp.path().join("out/layout.csv")), vec![1]);
    let json = fs::read_to_string(tmp.path().join("out/metrics.json")).unwrap();
    assert!(json.contains("\"provenance\""));
}

#[test]
fn ga_without_iterations_returns_best_seed() {
    let tmp = TempDir::new().unwrap();
    let cfg = grid_config(tmp.path(), 5, 5);
    let cfg = cfg.to_str().unwrap();
    let rows: Vec<(usize, u32, u64)> = (0..25).map(|c| (c, (c % 7) as u32, 1 + (c % 4) as u64)).collect();
    demand_file(tmp.path(), "d.csv", 25, &rows);
    ok(
        tmp.path(),
        &[
            "--config", cfg, "solve", "--demand", "d.csv", "--solver", "ga", "--h", "1", "--population", "12",
            "--iterations", "0", "--seed", "3",
        ],
    );
    let (mh, mrows) = table(&tmp.path().join("out/metrics.csv"));
    let objective = column(&mh, &mrows[0], "objective");
    let (ph, prows) = table(&tmp.path().join("out/population.csv"));
    let initial: Vec<f64> = prows
        .iter()
        .filter(|r| r[0] == "initial")
        .map(|r| column(&ph, r, "objective"))
        .collect();
    assert_eq!(initial.len(), 12);
    let best = initial.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!((best - objective).abs() < 1e-9, "{best} vs {objective}");
}

#[test]
fn exact_refuses_large_instances() {
    let tmp = TempDir::new().unwrap();
    let cfg = grid_config(tmp.path(), 6, 5);
    let cfg = cfg.to_str().unwrap();
    let rows: Vec<(usize, u32, u64)> = (0..30).map(|c| (c, 0, 1)).collect();
    demand_file(tmp.path(), "d.csv", 30, &rows);
    let out = evplace(tmp.path(), &["--config", cfg, "solve", "--demand", "d.csv", "--solver", "exact"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("25"));
}

#[test]
fn evaluate_on_own_demand_matches_solve() {
    let tmp = TempDir::new().unwrap();
    let cfg = grid_config(tmp.path(), 5, 5);
    let cfg = cfg.to_str().unwrap();
    let rows: Vec<(usize, u32, u64)> = (0..25).step_by(2).map(|c| (c, 1, 2)).collect();
    demand_file(tmp.path(), "d.csv", 25, &rows);
    ok(tmp.path(), &["--config", cfg, "solve", "--demand", "d.csv", "--solver", "greedy"]);
    ok(
        tmp.path(),
        &["--config", cfg, "evaluate", "--demand", "d.csv", "--layout", "out/layout.csv"],
    );
    let (mh, m) = table(&tmp.path().join("out/metrics.csv"));
    let (eh, e) = table(&tmp.path().join("out/evaluation.csv"));
    assert_eq!(e.len(), 1);
    for col in ["avg_distance_km", "distance_variance_km2", "station_count", "objective", "coverage_ratio"] {
        assert_eq!(column(&mh, &m[0], col), column(&eh, &e[0], col), "{col}");
    }
    assert!(tmp.path().join("out/evaluation.json").exists());
}

#[test]
fn disjoint_demand_reports_partial_coverage() {
    let tmp = TempDir::new().unwrap();
    let cfg = grid_config(tmp.path(), 3, 3);
    let cfg = cfg.to_str().unwrap();
    demand_file(tmp.path(), "a.csv", 9, &[(0, 0, 3)]);
    demand_file(tmp.path(), "b.csv", 9, &[(8, 5, 3)]);
    ok(
        tmp.path(),
        &["--config", cfg, "solve", "--demand", "a.csv", "--solver", "exact", "--h", "1"],
    );
    ok(
        tmp.path(),
        &["--config", cfg, "evaluate", "--demand", "a.csv", "--layout", "out/layout.csv", "--against", "b.csv"],
    );
    let (h, rows) = table(&tmp.path().join("out/evaluation.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(column(&h, &rows[0], "coverage_ratio"), 1.0);
    assert!(column(&h, &rows[1], "coverage_ratio") < 1.0);
}

#[test]
fn single_point_sweep_reproduces_baseline() {
    let tmp = TempDir::new().unwrap();
    let cfg = grid_config(tmp.path(), 10, 10);
    let cfg = cfg.to_str().unwrap();
    let mut args = vec!["--config", cfg];
    args.extend_from_slice(GEN);
    ok(tmp.path(), &args);
    ok(tmp.path(), &["--config", cfg, "demand"]);
    ok(tmp.path(), &["--config", cfg, "solve", "--solver", "greedy"]);
    ok(tmp.path(), &["--config", cfg, "evaluate"]);
    ok(
        tmp.path(),
        &["--config", cfg, "sweep", "--tau-values", "1800", "--l-values", "100"],
    );
    let (sh, s) = table(&tmp.path().join("out/sweep.csv"));
    let (eh, e) = table(&tmp.path().join("out/evaluation.csv"));
    assert_eq!(s.len(), 1);
    for col in ["total_demand", "avg_distance_km", "coverage_ratio"] {
        assert_eq!(column(&sh, &s[0], col), column(&eh, &e[0], col), "{col}");
    }
    ok(
        tmp.path(),
        &["--config", cfg, "sweep", "--tau-values", "600,1800", "--l-values", "100,10,1"],
    );
    let (_, s) = table(&tmp.path().join("out/sweep.csv"));
    assert_eq!(s.len(), 6);
}
