//! Exhaustive thruster-subset search.
//!
//! For every N-subset of the 24 thrusters the allocation matrix is checked
//! for rank 6, then each of the twelve signed unit wrenches is solved by NNLS.
//! A subset is viable when every residual is within `eps`; viable subsets are
//! ranked by the summed thrust of all twelve solutions.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix6, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AllocationMatrix, Layout, THRUSTER_COUNT};
use crate::nnls::{NnlsWorkspace, DEFAULT_TOL};

pub const DEFAULT_EPS: f64 = 1e-8;
pub const RANK_RTOL: f64 = 1e-9;
pub const DEFAULT_TIE_TOL: f64 = 1e-6;
const CHUNK: u64 = 1 << 15;

/// The twelve signed unit wrenches, ordered `f+ (x,y,z), tau+ (x,y,z), f-, tau-`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitCommandSet {
    commands: [Vector6<f64>; 12],
}

impl UnitCommandSet {
    pub fn standard() -> Self {
        let mut commands = [Vector6::zeros(); 12];
        for (k, cmd) in commands.iter_mut().enumerate() {
            let sign = if k < 6 { 1.0 } else { -1.0 };
            cmd[k % 6] = sign;
        }
        UnitCommandSet { commands }
    }

    pub fn commands(&self) -> &[Vector6<f64>; 12] {
        &self.commands
    }

    pub const LABELS: [&'static str; 12] = [
        "fx+", "fy+", "fz+", "tx+", "ty+", "tz+", "fx-", "fy-", "fz-", "tx-", "ty-", "tz-",
    ];
}

impl Default for UnitCommandSet {
    fn default() -> Self {
        Self::standard()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationRecord {
    pub thruster_ids: Vec<usize>,
    pub viable: bool,
    /// NNLS magnitudes per unit command, newtons. Empty when not viable.
    pub unit_solutions: Vec<Vec<f64>>,
    /// Sum of every entry of `unit_solutions`, newtons.
    pub total_thrust: f64,
    /// Largest squared residual over the commands that were solved.
    pub max_residual: f64,
}

// ---------------------------------------------------------------------------
// Combinations

pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// Lexicographic k-subsets of `1..=n`.
#[derive(Debug, Clone)]
pub struct Combinations {
    n: usize,
    current: Vec<usize>,
    remaining: u64,
}

impl Combinations {
    /// Starts at the subset with lexicographic index `rank`.
    pub fn starting_at(n: usize, k: usize, rank: u64) -> Result<Self> {
        validate_nk(n, k)?;
        let total = binomial(n as u64, k as u64);
        if rank > total {
            return Err(Error::domain(format!("rank {rank} beyond {total} subsets")));
        }
        let current = if rank < total {
            unrank(n, k, rank)
        } else {
            Vec::new()
        };
        Ok(Combinations {
            n,
            current,
            remaining: total - rank,
        })
    }
}

fn validate_nk(n: usize, k: usize) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::domain(format!("subset size {k} must be in 1..={n}")));
    }
    Ok(())
}

/// Lexicographic unranking (combinatorial number system), 1-based elements.
fn unrank(n: usize, k: usize, mut rank: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut next = 1;
    for slot in 0..k {
        let left = (k - slot - 1) as u64;
        loop {
            let with_next = binomial((n - next) as u64, left);
            if rank < with_next {
                break;
            }
            rank -= with_next;
            next += 1;
        }
        out.push(next);
        next += 1;
    }
    out
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let out = self.current.clone();
        if self.remaining > 0 {
            let k = self.current.len();
            let mut i = k;
            while i > 0 {
                i -= 1;
                if self.current[i] < self.n - (k - 1 - i) {
                    self.current[i] += 1;
                    for j in i + 1..k {
                        self.current[j] = self.current[j - 1] + 1;
                    }
                    break;
                }
            }
        }
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = self.remaining as usize;
        (r, Some(r))
    }
}

impl ExactSizeIterator for Combinations {}

pub fn enumerate_subsets(n: usize, k: usize) -> Result<Combinations> {
    Combinations::starting_at(n, k, 0)
}

// ---------------------------------------------------------------------------
// Rank and viability

/// Numerical rank of a 6xN matrix: singular values above `sigma_max * 1e-9`.
pub fn rank_of(h: &AllocationMatrix) -> usize {
    rank_of_columns(h.columns())
}

fn rank_of_columns(columns: &[Vector6<f64>]) -> usize {
    if columns.is_empty() {
        return 0;
    }
    // Reduce the N x 6 transpose to its 6 x 6 triangular factor; R shares
    // the singular values of H.
    let r = triangular_factor(columns);
    let sv = r.singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > smax * RANK_RTOL).count()
}

/// R factor of the Householder QR of `H^T` (rows of `H^T` are the columns).
fn triangular_factor(columns: &[Vector6<f64>]) -> Matrix6<f64> {
    let n = columns.len();
    // work[i][j]: row i of H^T (= column i of H), entry j
    let mut work: Vec<[f64; 6]> = columns.iter().map(|c| (*c).into()).collect();
    let mut r = Matrix6::zeros();
    for j in 0..6.min(n) {
        let norm = (j..n).map(|i| work[i][j] * work[i][j]).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if work[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..n).map(|i| work[i][j]).collect();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        if vv == 0.0 {
            continue;
        }
        for c in j..6 {
            let s: f64 = v.iter().enumerate().map(|(t, vt)| vt * work[j + t][c]).sum::<f64>() * 2.0 / vv;
            for (t, vt) in v.iter().enumerate() {
                work[j + t][c] -= s * vt;
            }
        }
    }
    for i in 0..6.min(n) {
        for c in i..6 {
            r[(i, c)] = work[i][c];
        }
    }
    r
}

/// Per-thread evaluator reusing NNLS scratch space.
#[derive(Debug, Clone)]
pub struct Evaluator {
    commands: UnitCommandSet,
    eps: f64,
    workspace: NnlsWorkspace,
    buffer: Vec<f64>,
    keep_solutions: bool,
}

impl Evaluator {
    pub fn new(commands: UnitCommandSet, eps: f64) -> Self {
        Evaluator {
            commands,
            eps,
            workspace: NnlsWorkspace::new(),
            buffer: Vec::new(),
            keep_solutions: true,
        }
    }

    /// Skip storing per-command solutions; only the score is kept.
    pub fn scores_only(mut self) -> Self {
        self.keep_solutions = false;
        self
    }

    pub fn evaluate(&mut self, h: &AllocationMatrix) -> ConfigurationRecord {
        self.evaluate_columns(h.thruster_ids(), h.columns())
    }

    fn evaluate_columns(&mut self, ids: &[usize], columns: &[Vector6<f64>]) -> ConfigurationRecord {
        let mut record = ConfigurationRecord {
            thruster_ids: ids.to_vec(),
            viable: false,
            unit_solutions: Vec::new(),
            total_thrust: 0.0,
            max_residual: f64::INFINITY,
        };
        if columns.len() < 6 || rank_of_columns(columns) < 6 {
            return record;
        }
        let n = columns.len();
        self.buffer.clear();
        for c in columns {
            self.buffer.extend_from_slice(c.as_slice());
        }
        let mut max_residual = 0.0f64;
        let mut total = 0.0;
        let mut solutions = Vec::new();
        for cmd in self.commands.commands.iter() {
            let sol = match self.workspace.solve(&self.buffer, 6, n, cmd.as_slice(), DEFAULT_TOL) {
                Ok(sol) => sol,
                Err(err) => {
                    log::warn!("nnls failed on {ids:?}: {err}");
                    record.max_residual = f64::INFINITY;
                    return record;
                }
            };
            max_residual = max_residual.max(sol.residual_norm_sq);
            if sol.residual_norm_sq > self.eps {
                record.max_residual = max_residual;
                return record;
            }
            total += sol.x.iter().sum::<f64>();
            if self.keep_solutions {
                solutions.push(sol.x);
            }
        }
        record.viable = true;
        record.max_residual = max_residual;
        record.total_thrust = total;
        record.unit_solutions = solutions;
        record
    }
}

pub fn viability_test(h: &AllocationMatrix, cmds: &UnitCommandSet, eps: f64) -> ConfigurationRecord {
    Evaluator::new(cmds.clone(), eps).evaluate(h)
}

// ---------------------------------------------------------------------------
// Sweep

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub combinations: u64,
    pub full_rank: u64,
    pub viable: u64,
    pub optimal: u64,
    pub f_min: Option<f64>,
    /// Viable counts under each of `SearchConfig::eps_probes`, same order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub viable_at_probes: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub rows: Vec<SweepRow>,
}

impl SearchSummary {
    pub fn row(&self, n: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.n == n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalSet {
    pub n: usize,
    pub f_min: Option<f64>,
    /// Every optimal subset, lexicographic.
    pub configurations: Vec<Vec<usize>>,
    /// Full record of the first optimal subset.
    pub representative: Option<ConfigurationRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub side_length: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub eps: f64,
    pub tie_tol: f64,
    pub n_min: usize,
    pub n_max: usize,
    /// Extra residual thresholds whose viable counts are tallied alongside
    /// `eps` in the same pass.
    pub eps_probes: Vec<f64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            side_length: 0.5,
            theta_deg: 0.0,
            phi_deg: 90.0,
            eps: DEFAULT_EPS,
            tie_tol: DEFAULT_TIE_TOL,
            n_min: 6,
            n_max: 24,
            eps_probes: Vec::new(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(6..=THRUSTER_COUNT).contains(&self.n_min)
            || !(6..=THRUSTER_COUNT).contains(&self.n_max)
            || self.n_min > self.n_max
        {
            return Err(Error::domain(format!(
                "thruster count range {}..={} must lie within 6..=24",
                self.n_min, self.n_max
            )));
        }
        for eps in std::iter::once(&self.eps).chain(&self.eps_probes) {
            if !(eps.is_finite() && *eps > 0.0) {
                return Err(Error::domain(format!("eps {eps} must be positive")));
            }
        }
        if !(self.tie_tol.is_finite() && self.tie_tol >= 0.0) {
            return Err(Error::domain("tie tolerance must be non-negative"));
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<Layout> {
        let angles = crate::geometry::FaceAngles::from_degrees(self.theta_deg, self.phi_deg)?;
        Layout::new(self.side_length, angles)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub summary: SearchSummary,
    pub optimal: Vec<OptimalSet>,
}

#[derive(Debug, Clone, Default)]
struct ChunkTally {
    full_rank: u64,
    viable: u64,
    viable_at_probes: Vec<u64>,
    f_min: f64,
    /// (subset, score) within tie tolerance of the chunk minimum.
    best: Vec<(Vec<usize>, f64)>,
}

impl ChunkTally {
    fn new() -> Self {
        ChunkTally {
            f_min: f64::INFINITY,
            ..Default::default()
        }
    }

    fn offer(&mut self, ids: Vec<usize>, score: f64, tie_tol: f64) {
        if score < self.f_min {
            self.f_min = score;
            let cut = score + tie_tol;
            self.best.retain(|(_, s)| *s <= cut);
        }
        if score <= self.f_min + tie_tol {
            self.best.push((ids, score));
        }
    }
}

/// Sweeps every subset size in the configured range. Results do not depend
/// on the rayon schedule: chunks are fixed ranges of the lexicographic order
/// and are merged in that order.
pub fn sweep(config: &SearchConfig) -> Result<SweepOutput> {
    config.validate()?;
    let layout = config.layout()?;
    let columns: Vec<Vector6<f64>> = layout.thrusters.iter().map(|t| t.column()).collect();
    let commands = UnitCommandSet::standard();
    // One pass at the loosest threshold; tighter ones are decided from the
    // worst residual.
    let eval_eps = config.eps_probes.iter().fold(config.eps, |a, &b| a.max(b));
    let n_probes = config.eps_probes.len();

    let mut rows = Vec::new();
    let mut optimal = Vec::new();
    for n in config.n_min..=config.n_max {
        let total = binomial(THRUSTER_COUNT as u64, n as u64);
        let starts: Vec<u64> = (0..total).step_by(CHUNK as usize).collect();
        let tallies: Vec<ChunkTally> = starts
            .par_iter()
            .map_init(
                || Evaluator::new(commands.clone(), eval_eps).scores_only(),
                |eval, &start| {
                    let count = CHUNK.min(total - start) as usize;
                    let mut tally = ChunkTally::new();
                    tally.viable_at_probes = vec![0; n_probes];
                    let mut subset_cols = Vec::with_capacity(n);
                    let combos = Combinations::starting_at(THRUSTER_COUNT, n, start)
                        .expect("chunk start is in range");
                    for ids in combos.take(count) {
                        subset_cols.clear();
                        subset_cols.extend(ids.iter().map(|&id| columns[id - 1]));
                        if rank_of_columns(&subset_cols) < 6 {
                            continue;
                        }
                        tally.full_rank += 1;
                        let rec = eval.evaluate_columns(&ids, &subset_cols);
                        if !rec.viable {
                            continue;
                        }
                        for (count, eps) in tally.viable_at_probes.iter_mut().zip(&config.eps_probes) {
                            if rec.max_residual <= *eps {
                                *count += 1;
                            }
                        }
                        if rec.max_residual <= config.eps {
                            tally.viable += 1;
                            tally.offer(ids, rec.total_thrust, config.tie_tol);
                        }
                    }
                    tally
                },
            )
            .collect();

        let mut full_rank = 0;
        let mut viable = 0;
        let mut f_min = f64::INFINITY;
        let mut viable_at_probes = vec![0; n_probes];
        for t in &tallies {
            full_rank += t.full_rank;
            viable += t.viable;
            for (acc, c) in viable_at_probes.iter_mut().zip(&t.viable_at_probes) {
                *acc += c;
            }
            f_min = f_min.min(t.f_min);
        }
        let cut = f_min + config.tie_tol;
        let configurations: Vec<Vec<usize>> = tallies
            .into_iter()
            .flat_map(|t| t.best)
            .filter(|(_, s)| *s <= cut)
            .map(|(ids, _)| ids)
            .collect();
        let f_min = f_min.is_finite().then_some(f_min);
        let representative = configurations.first().map(|ids| {
            let h = layout.allocation(ids).expect("ids come from the layout");
            viability_test(&h, &commands, config.eps)
        });
        log::info!(
            "N={n}: {total} subsets, {viable} viable, {} optimal, f_min={f_min:?}",
            configurations.len()
        );
        rows.push(SweepRow {
            n,
            combinations: total,
            full_rank,
            viable,
            optimal: configurations.len() as u64,
            f_min,
            viable_at_probes,
        });
        optimal.push(OptimalSet {
            n,
            f_min,
            configurations,
            representative,
        });
    }
    Ok(SweepOutput {
        summary: SearchSummary { rows },
        optimal,
    })
}

// ---------------------------------------------------------------------------
// Reports

fn fmt_fmin(f: Option<f64>) -> String {
    match f {
        Some(v) => format!("{v:.6}"),
        None => "--".to_string(),
    }
}

pub fn summary_csv(summary: &SearchSummary) -> String {
    let mut out = String::from("n_thrusters,combinations,viable,optimal,f_min_n\n");
    for r in &summary.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.n,
            r.combinations,
            r.viable,
            r.optimal,
            fmt_fmin(r.f_min)
        );
    }
    out
}

/// One representative optimal subset per N, shaped like the optimal-ID table.
pub fn optimal_ids_csv(optimal: &[OptimalSet]) -> String {
    let mut out = String::from("n_thrusters,thruster_ids\n");
    for set in optimal {
        let ids = set
            .configurations
            .first()
            .map(|ids| {
                ids.iter()
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .unwrap_or_else(|| "--".into());
        let _ = writeln!(out, "{},{}", set.n, ids);
    }
    out
}

/// Writes `summary.csv`, `optimal_ids.csv` and one `optimal_N{n}.json` per
/// subset size. Returns the written paths.
pub fn emit_report(output: &SweepOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut write = |name: String, text: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    write("summary.csv".into(), summary_csv(&output.summary))?;
    write("optimal_ids.csv".into(), optimal_ids_csv(&output.optimal))?;
    for set in &output.optimal {
        let text = serde_json::to_string_pretty(set).expect("optimal set serializes");
        write(format!("optimal_N{}.json", set.n), text + "\n")?;
    }
    Ok(written)
}
