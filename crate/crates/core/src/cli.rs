//! Command-line front end: `search`, `allocate`, `simulate`, `batch` and
//! `replay`.
//!
//! Exit codes: 0 success, 1 I/O or runtime failure, 2 usage or malformed
//! input, 3 infeasible allocation.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FaceAngles, Layout, THRUSTER_COUNT};
use crate::nnls::{nnls_solve, DEFAULT_TOL};
use crate::search::{self, SearchConfig, DEFAULT_EPS};
use crate::sim::{self, ScenarioConfig, SimResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "cubethrust", version, about = "Thruster configuration search and docking simulation for cubic satellites")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sweep every thruster subset and report viable and optimal sets.
    Search(SearchArgs),
    /// Solve one wrench with non-negative thrusts.
    Allocate(AllocateArgs),
    /// Run one closed-loop docking scenario.
    Simulate(SimulateArgs),
    /// Run the docking scenario for one optimal set per thruster count.
    Batch(BatchArgs),
    /// Re-run the command recorded in a manifest into a new directory.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Squared-residual threshold for viability.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Reserved; every pipeline is deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct GeometryArgs {
    /// Cube side length, metres.
    #[arg(long)]
    pub side_length: Option<f64>,
    /// Face-local in-plane angle, degrees.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Face-local elevation angle, degrees.
    #[arg(long)]
    pub phi: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Search config or manifest to start from.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n_min: Option<usize>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub tie_tol: Option<f64>,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct AllocateArgs {
    /// Thruster ids, comma or space separated. Defaults to all 24.
    #[arg(long)]
    pub ids: Option<String>,
    /// `fx,fy,fz,tx,ty,tz` in N and N m.
    #[arg(long, allow_hyphen_values = true)]
    pub wrench: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub geometry: GeometryArgs,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario file or manifest. Defaults to the built-in scenario.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Overrides the scenario's thruster ids.
    #[arg(long)]
    pub ids: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct BatchArgs {
    /// Base scenario file or manifest.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// `optimal_ids.csv` from a previous search; otherwise the sweep is run.
    #[arg(long)]
    pub sets: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    pub n_min: usize,
    #[arg(long, default_value_t = 24)]
    pub n_max: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    /// `manifest.json` from an earlier run.
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
}

/// Written next to every set of outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub command: String,
    pub config: serde_json::Value,
    pub version: String,
    pub timestamp_unix: u64,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, config: serde_json::Value, outputs: &[PathBuf], dir: &Path) -> Self {
        RunManifest {
            command_line: std::env::args().collect(),
            command: command.to_string(),
            config,
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            outputs: outputs
                .iter()
                .map(|p| p.strip_prefix(dir).unwrap_or(p).display().to_string())
                .collect(),
        }
    }

    fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let common = match &cli.command {
        Command::Search(a) => &a.common,
        Command::Allocate(a) => &a.common,
        Command::Simulate(a) => &a.common,
        Command::Batch(a) => &a.common,
        Command::Replay(a) => &a.common,
    };
    let pool = match thread_pool(common.threads) {
        Ok(pool) => pool,
        Err(e) => return report(&e),
    };
    let outcome = pool.install(|| match &cli.command {
        Command::Search(a) => cmd_search(a),
        Command::Allocate(a) => cmd_allocate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Batch(a) => cmd_batch(a),
        Command::Replay(a) => cmd_replay(a),
    });
    match outcome {
        Ok(code) => code,
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> i32 {
    eprintln!("error: {e}");
    exit_code(e)
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Domain(_) | Error::Parse { .. } => EXIT_USAGE,
        Error::Io { .. } | Error::Convergence { .. } | Error::Numeric(_) => EXIT_IO,
    }
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        if k == 0 {
            return Err(Error::Domain("--threads must be at least 1".into()));
        }
        builder = builder.num_threads(k);
    }
    builder
        .build()
        .map_err(|e| Error::Numeric(format!("cannot start thread pool: {e}")))
}

/// Reads a config of type `T`, or the `config` member of a manifest.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let direct = serde_json::from_str::<T>(&text);
    match direct {
        Ok(cfg) => Ok(cfg),
        Err(err) => {
            if let Ok(m) = serde_json::from_str::<RunManifest>(&text) {
                return serde_json::from_value(m.config).map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    message: format!("manifest config: {e}"),
                });
            }
            Err(Error::Parse {
                path: path.to_path_buf(),
                message: err.to_string(),
            })
        }
    }
}

pub fn parse_ids(text: &str) -> Result<Vec<usize>> {
    let ids = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::Domain(format!("thruster id '{s}' is not a positive integer")))
        })
        .collect::<Result<Vec<_>>>()?;
    if ids.is_empty() {
        return Err(Error::domain("no thruster ids given"));
    }
    Ok(ids)
}

pub fn parse_wrench(text: &str) -> Result<[f64; 6]> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 6 {
        return Err(Error::Domain(format!("wrench needs 6 comma-separated values, got {}", parts.len())));
    }
    let mut w = [0.0; 6];
    for (slot, p) in w.iter_mut().zip(&parts) {
        let v: f64 = p
            .parse()
            .map_err(|_| Error::Domain(format!("wrench entry '{p}' is not a number")))?;
        if !v.is_finite() {
            return Err(Error::Domain(format!("wrench entry '{p}' is not finite")));
        }
        *slot = v;
    }
    Ok(w)
}

fn apply_geometry(cfg: &mut SearchConfig, g: &GeometryArgs) {
    if let Some(v) = g.side_length {
        cfg.side_length = v;
    }
    if let Some(v) = g.theta {
        cfg.theta_deg = v;
    }
    if let Some(v) = g.phi {
        cfg.phi_deg = v;
    }
}

pub fn cmd_search(args: &SearchArgs) -> Result<i32> {
    let mut cfg = match &args.config {
        Some(path) => load_config::<SearchConfig>(path)?,
        None => SearchConfig::default(),
    };
    apply_geometry(&mut cfg, &args.geometry);
    if let Some(v) = args.n_min {
        cfg.n_min = v;
    }
    if let Some(v) = args.n_max {
        cfg.n_max = v;
    }
    if let Some(v) = args.tie_tol {
        cfg.tie_tol = v;
    }
    if let Some(v) = args.common.eps {
        cfg.eps = v;
    }
    run_search(&cfg, &args.out)
}

fn run_search(cfg: &SearchConfig, out: &Path) -> Result<i32> {
    cfg.validate()?;
    let output = search::sweep(cfg)?;
    let written = search::emit_report(&output, out)?;
    let config = serde_json::to_value(cfg).expect("config serializes");
    RunManifest::new("search", config, &written, out).write(out)?;
    print!("{}", search::summary_csv(&output.summary));
    Ok(EXIT_OK)
}

/// Result of a single allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationReport {
    pub thruster_ids: Vec<usize>,
    pub wrench: [f64; 6],
    pub magnitudes: Vec<f64>,
    pub total_thrust: f64,
    pub residual_sq: f64,
    pub eps: f64,
    pub feasible: bool,
}

pub fn allocate(layout: &Layout, ids: &[usize], wrench: [f64; 6], eps: f64) -> Result<AllocationReport> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Domain(format!("eps {eps} must be positive")));
    }
    let h = layout.allocation(ids)?;
    let a: DMatrix<f64> = h.to_matrix();
    let b = DVector::from_column_slice(&wrench);
    let sol = nnls_solve(&a, &b, DEFAULT_TOL)?;
    Ok(AllocationReport {
        thruster_ids: ids.to_vec(),
        wrench,
        total_thrust: sol.x.iter().sum(),
        magnitudes: sol.x,
        residual_sq: sol.residual_norm_sq,
        eps,
        feasible: sol.residual_norm_sq <= eps,
    })
}

pub fn allocation_text(r: &AllocationReport) -> String {
    let mut out = String::from("thruster,magnitude_n\n");
    for (id, f) in r.thruster_ids.iter().zip(&r.magnitudes) {
        out += &format!("{id},{f:.12}\n");
    }
    out += &format!("total_thrust_n,{:.12}\n", r.total_thrust);
    out += &format!("residual_sq,{:.6e}\n", r.residual_sq);
    out
}

/// Everything an allocation depends on; recorded in its manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocateConfig {
    pub geometry: SearchConfig,
    pub thruster_ids: Vec<usize>,
    pub wrench: [f64; 6],
    pub eps: f64,
}

pub fn cmd_allocate(args: &AllocateArgs) -> Result<i32> {
    let mut geometry = SearchConfig::default();
    apply_geometry(&mut geometry, &args.geometry);
    let cfg = AllocateConfig {
        geometry,
        thruster_ids: match &args.ids {
            Some(text) => parse_ids(text)?,
            None => (1..=THRUSTER_COUNT).collect(),
        },
        wrench: parse_wrench(&args.wrench)?,
        eps: args.common.eps.unwrap_or(DEFAULT_EPS),
    };
    run_allocate(&cfg, args.out.as_deref())
}

fn run_allocate(cfg: &AllocateConfig, out: Option<&Path>) -> Result<i32> {
    let g = &cfg.geometry;
    let layout = Layout::new(g.side_length, FaceAngles::from_degrees(g.theta_deg, g.phi_deg)?)?;
    let report = allocate(&layout, &cfg.thruster_ids, cfg.wrench, cfg.eps)?;
    print!("{}", allocation_text(&report));
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("allocation.json");
        let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        let config = serde_json::to_value(cfg).expect("config serializes");
        RunManifest::new("allocate", config, &[path], dir).write(dir)?;
    }
    if !report.feasible {
        eprintln!(
            "infeasible: squared residual {:.6e} exceeds eps {:.1e}",
            report.residual_sq, report.eps
        );
        return Ok(EXIT_INFEASIBLE);
    }
    Ok(EXIT_OK)
}

fn scenario(path: &Option<PathBuf>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => load_config::<ScenarioConfig>(p),
        None => Ok(ScenarioConfig::default()),
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    let mut cfg = scenario(&args.scenario)?;
    if let Some(text) = &args.ids {
        cfg.thruster_ids = parse_ids(text)?;
    }
    run_simulate(&cfg, &args.out)
}

fn run_simulate(cfg: &ScenarioConfig, out: &Path) -> Result<i32> {
    cfg.validate()?;
    let result = sim::run(cfg)?;
    let written = sim::emit_run(&result, out)?;
    let config = serde_json::to_value(cfg).expect("scenario serializes");
    RunManifest::new("simulate", config, &written, out).write(out)?;
    println!("{}", result_line(&result));
    Ok(EXIT_OK)
}

fn result_line(r: &SimResult) -> String {
    let t = r
        .time_to_dock
        .map_or_else(|| "--".to_string(), |t| format!("{t:.1}"));
    format!(
        "N={} docked={} time_to_dock_s={} total_impulse_ns={:.6} angular_velocity_rms={:.6e}",
        r.thruster_ids.len(),
        r.docked,
        t,
        r.total_impulse,
        r.angular_velocity_rms_norm
    )
}

/// Reads `n_thrusters,thruster_ids` rows; `--` rows are skipped.
pub fn read_optimal_sets(path: &Path) -> Result<Vec<Vec<usize>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut sets = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        let bad = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            message: format!("line {}: {msg}", k + 1),
        };
        let Some((n, ids)) = line.split_once(',') else {
            return Err(bad("expected two fields".into()));
        };
        if ids.trim() == "--" {
            continue;
        }
        let ids = parse_ids(ids).map_err(|e| bad(e.to_string()))?;
        if n.trim().parse::<usize>().ok() != Some(ids.len()) {
            return Err(bad(format!("count {n} does not match {} ids", ids.len())));
        }
        sets.push(ids);
    }
    Ok(sets)
}

pub fn cmd_batch(args: &BatchArgs) -> Result<i32> {
    let cfg = scenario(&args.scenario)?;
    if args.n_min > args.n_max {
        return Err(Error::Domain(format!("--n-min {} exceeds --n-max {}", args.n_min, args.n_max)));
    }
    let sets: Vec<Vec<usize>> = match &args.sets {
        Some(path) => read_optimal_sets(path)?,
        None => {
            let search_cfg = SearchConfig {
                side_length: cfg.side_length,
                theta_deg: cfg.theta_deg,
                phi_deg: cfg.phi_deg,
                eps: args.common.eps.unwrap_or(DEFAULT_EPS),
                n_min: args.n_min.max(6),
                n_max: args.n_max,
                ..SearchConfig::default()
            };
            let output = search::sweep(&search_cfg)?;
            output
                .optimal
                .into_iter()
                .filter_map(|o| o.configurations.into_iter().next())
                .collect()
        }
    };
    let sets: Vec<Vec<usize>> = sets
        .into_iter()
        .filter(|s| (args.n_min..=args.n_max).contains(&s.len()))
        .collect();
    if sets.is_empty() {
        return Err(Error::domain("no thruster sets in the requested range"));
    }
    run_batch(&BatchConfig { scenario: cfg, sets }, &args.out)
}

/// Base scenario plus the thruster sets of a batch; recorded in its manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    pub scenario: ScenarioConfig,
    pub sets: Vec<Vec<usize>>,
}

fn run_batch(cfg: &BatchConfig, out: &Path) -> Result<i32> {
    cfg.scenario.validate()?;
    let results = sim::batch(&cfg.scenario, &cfg.sets);
    let mut rows = Vec::new();
    for r in results {
        let r = r?;
        println!("{}", result_line(&r));
        rows.push((r.thruster_ids.len(), r));
    }
    let written = sim::emit_batch(&rows, out)?;
    let config = serde_json::to_value(cfg).expect("batch config serializes");
    RunManifest::new("batch", config, &written, out).write(out)?;
    Ok(EXIT_OK)
}

pub fn cmd_replay(args: &ReplayArgs) -> Result<i32> {
    let path = &args.manifest;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let parse = |message: String| Error::Parse {
        path: path.clone(),
        message,
    };
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| parse(e.to_string()))?;
    fn config<T: DeserializeOwned>(m: &RunManifest) -> std::result::Result<T, String> {
        serde_json::from_value(m.config.clone()).map_err(|e| format!("manifest config: {e}"))
    }
    match manifest.command.as_str() {
        "search" => run_search(&config(&manifest).map_err(parse)?, &args.out),
        "allocate" => run_allocate(&config(&manifest).map_err(parse)?, Some(&args.out)),
        "simulate" => run_simulate(&config(&manifest).map_err(parse)?, &args.out),
        "batch" => run_batch(&config(&manifest).map_err(parse)?, &args.out),
        other => Err(parse(format!("unknown command '{other}'"))),
    }
}
