//! Closed-loop rendezvous and docking runs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    nonlinear_step, omega_rel, quat_from_axis_angle, rotation_matrix, InertiaModel, RelativeState, TargetOrbit,
    EARTH_MU,
};
use crate::error::{Error, Result};
use crate::geometry::{FaceAngles, Layout};
use crate::mpc::{Controller, MpcConfig, MpcWeights, QpSettings, ReferenceMode, TerminalSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConditions {
    /// LVLH metres.
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Chaser attitude relative to the target, as axis and angle.
    pub attitude_axis: Vector3<f64>,
    pub attitude_angle_deg: f64,
    /// Chaser body rate, rad/s.
    pub chaser_rate: Vector3<f64>,
    pub target_rate_axis: Vector3<f64>,
    pub target_rate_deg_s: f64,
}

impl Default for InitialConditions {
    fn default() -> Self {
        InitialConditions {
            position: Vector3::new(10.0, 0.0, 0.0),
            velocity: Vector3::zeros(),
            attitude_axis: Vector3::new(0.0, 0.0, 1.0),
            attitude_angle_deg: 30.0,
            chaser_rate: Vector3::zeros(),
            target_rate_axis: Vector3::new(1.0, 2.0, 3.0),
            target_rate_deg_s: 1.0,
        }
    }
}

impl InitialConditions {
    pub fn relative_state(&self) -> Result<RelativeState> {
        let q = if self.attitude_angle_deg == 0.0 {
            RelativeState::docked().q
        } else {
            quat_from_axis_angle(&self.attitude_axis, self.attitude_angle_deg.to_radians())?
        };
        let w_t = if self.target_rate_deg_s == 0.0 {
            Vector3::zeros()
        } else {
            let n = self.target_rate_axis.norm();
            if !(n > 0.0 && n.is_finite()) {
                return Err(Error::domain("target rate axis must be non-zero"));
            }
            self.target_rate_axis / n * self.target_rate_deg_s.to_radians()
        };
        let state = RelativeState {
            r: self.position,
            v: self.velocity,
            q,
            w: omega_rel(&self.chaser_rate, &w_t, &q),
        };
        if !state.is_finite() {
            return Err(Error::domain("initial state is not finite"));
        }
        Ok(state)
    }
}

/// Everything one closed-loop run depends on. Missing JSON fields take the
/// defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub thruster_ids: Vec<usize>,
    pub side_length: f64,
    pub theta_deg: f64,
    pub phi_deg: f64,
    pub mass: f64,
    /// Diagonal inertia, kg m^2. Defaults to a uniform cube.
    pub inertia_diag: Option<Vector3<f64>>,
    pub mu: f64,
    pub semi_major_axis: f64,
    pub eccentricity: f64,
    pub true_anomaly_deg: f64,
    pub dt: f64,
    pub t_final: f64,
    pub horizon: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub phase1: MpcWeights,
    pub phase2: MpcWeights,
    pub waypoint: Vector3<f64>,
    pub switch_pos_tol: f64,
    pub switch_vel_tol: f64,
    pub terminal: TerminalSet,
    pub qp: QpSettings,
    pub reference: ReferenceMode,
    pub initial: InitialConditions,
    /// A thruster counts as firing above this fraction of `f_max`.
    pub activity_threshold: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let mpc = MpcConfig::default();
        ScenarioConfig {
            thruster_ids: (1..=23).step_by(2).collect(),
            side_length: 0.5,
            theta_deg: 0.0,
            phi_deg: 90.0,
            mass: 20.0,
            inertia_diag: None,
            mu: EARTH_MU,
            semi_major_axis: 12_000e3,
            eccentricity: 0.1,
            true_anomaly_deg: 0.0,
            dt: 0.1,
            t_final: 400.0,
            horizon: mpc.horizon,
            f_min: mpc.f_min,
            f_max: mpc.f_max,
            phase1: mpc.schedule.phase1,
            phase2: mpc.schedule.phase2,
            waypoint: mpc.schedule.waypoint,
            switch_pos_tol: mpc.schedule.switch_pos_tol,
            switch_vel_tol: mpc.schedule.switch_vel_tol,
            terminal: mpc.terminal,
            qp: mpc.qp,
            reference: mpc.reference,
            initial: InitialConditions::default(),
            activity_threshold: 1e-4,
        }
    }
}

impl ScenarioConfig {
    pub fn with_ids(ids: &[usize]) -> Self {
        ScenarioConfig {
            thruster_ids: ids.to_vec(),
            ..Default::default()
        }
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn mpc_config(&self) -> MpcConfig {
        let mut cfg = MpcConfig {
            horizon: self.horizon,
            ts: self.dt,
            f_min: self.f_min,
            f_max: self.f_max,
            terminal: self.terminal,
            qp: self.qp,
            reference: self.reference,
            ..Default::default()
        };
        cfg.schedule.phase1 = self.phase1.clone();
        cfg.schedule.phase2 = self.phase2.clone();
        cfg.schedule.waypoint = self.waypoint;
        cfg.schedule.switch_pos_tol = self.switch_pos_tol;
        cfg.schedule.switch_vel_tol = self.switch_vel_tol;
        cfg
    }

    pub fn inertia(&self) -> Result<InertiaModel> {
        match self.inertia_diag {
            Some(d) => InertiaModel::new(self.mass, Matrix3::from_diagonal(&d)),
            None => InertiaModel::uniform_cube(self.mass, self.side_length),
        }
    }

    pub fn orbit(&self) -> Result<TargetOrbit> {
        TargetOrbit::new(
            self.mu,
            self.semi_major_axis,
            self.eccentricity,
            self.true_anomaly_deg.to_radians(),
        )
    }

    pub fn layout(&self) -> Result<Layout> {
        Layout::new(self.side_length, FaceAngles::from_degrees(self.theta_deg, self.phi_deg)?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::domain(format!("time step {} must be positive", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= self.dt) {
            return Err(Error::domain(format!("final time {} must be at least dt", self.t_final)));
        }
        if !(self.activity_threshold.is_finite() && self.activity_threshold >= 0.0) {
            return Err(Error::domain("activity threshold must be non-negative"));
        }
        self.layout()?.allocation(&self.thruster_ids)?;
        self.inertia()?;
        self.orbit()?;
        self.mpc_config().validate()?;
        self.initial.relative_state()?;
        Ok(())
    }

    fn step_count(&self) -> usize {
        // tolerate round-off in t_final / dt
        (self.t_final / self.dt - 1e-9).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub state: Vec<f64>,
    pub thrust: Vec<f64>,
    pub phase: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub total_impulse: f64,
    /// Per-axis RMS of the relative body rate, rad/s.
    pub angular_velocity_rms: Vector3<f64>,
    /// RMS of the rate magnitude, rad/s.
    pub angular_velocity_rms_norm: f64,
    /// Fraction of steps each thruster fired.
    pub activity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub thruster_ids: Vec<usize>,
    pub docked: bool,
    pub time_to_dock: Option<f64>,
    pub phase_switch_time: Option<f64>,
    pub total_impulse: f64,
    pub angular_velocity_rms: Vector3<f64>,
    pub angular_velocity_rms_norm: f64,
    pub activity: Vec<f64>,
    pub steps: usize,
    pub qp_unconverged_steps: usize,
    pub final_state: RelativeState,
    pub diagnostic: Option<String>,
    #[serde(skip)]
    pub trajectory: Vec<LogRow>,
}

/// Impulse, body-rate RMS and firing fractions of a log.
pub fn metrics(log: &[LogRow], dt: f64, n_thrusters: usize, threshold: f64) -> Metrics {
    if log.is_empty() {
        return Metrics {
            total_impulse: 0.0,
            angular_velocity_rms: Vector3::zeros(),
            angular_velocity_rms_norm: 0.0,
            activity: vec![0.0; n_thrusters],
        };
    }
    let mut impulse = 0.0;
    let mut sq = Vector3::zeros();
    let mut fired = vec![0usize; n_thrusters];
    for row in log {
        for (k, f) in row.thrust.iter().enumerate() {
            impulse += f * dt;
            if *f > threshold {
                fired[k] += 1;
            }
        }
        let w = Vector3::new(row.state[10], row.state[11], row.state[12]);
        sq += w.component_mul(&w);
    }
    let count = log.len() as f64;
    let rms = (sq / count).map(f64::sqrt);
    Metrics {
        total_impulse: impulse,
        angular_velocity_rms_norm: (sq.sum() / count).sqrt(),
        angular_velocity_rms: rms,
        activity: fired.into_iter().map(|c| c as f64 / count).collect(),
    }
}

/// Steps the truth model under MPC until the docking bands hold or `t_final`.
pub fn run(config: &ScenarioConfig) -> Result<SimResult> {
    config.validate()?;
    let layout = config.layout()?;
    let alloc = layout.allocation(&config.thruster_ids)?;
    let inertia = config.inertia()?;
    let mut orbit = config.orbit()?;
    let mut state = config.initial.relative_state()?;
    let mut controller = Controller::new(config.mpc_config(), alloc.clone(), inertia.clone())?;
    let terminal = config.terminal;
    let n = alloc.len();
    let dt = config.dt;

    let mut log = Vec::new();
    let mut docked_at = None;
    let mut switch_at = None;
    let mut unconverged = 0;
    let mut diagnostic = None;
    let steps = config.step_count();
    for k in 0..=steps {
        let t = k as f64 * dt;
        if terminal.contains(&state) {
            docked_at = Some(t);
            break;
        }
        if k == steps {
            break;
        }
        let (thrust, diag) = match controller.control_step(&state, &orbit) {
            Ok(out) => out,
            Err(err) => {
                diagnostic = Some(format!("controller failed at t={t:.1}: {err}"));
                break;
            }
        };
        if diag.switched {
            switch_at = Some(t);
        }
        if !diag.qp_converged {
            unconverged += 1;
        }
        log.push(LogRow {
            t,
            state: state.to_vector().iter().copied().collect(),
            thrust: thrust.clone(),
            phase: diag.phase.index(),
        });
        match nonlinear_step(&state, &thrust, &alloc, &inertia, &orbit, dt).and_then(|s| Ok((s, orbit.propagate(dt)?)))
        {
            Ok((s, o)) => {
                state = s;
                orbit = o;
            }
            Err(err) => {
                diagnostic = Some(format!("propagation failed at t={t:.1}: {err}"));
                break;
            }
        }
    }
    let threshold = config.activity_threshold * config.f_max;
    let m = metrics(&log, dt, n, threshold);
    Ok(SimResult {
        thruster_ids: alloc.thruster_ids().to_vec(),
        docked: docked_at.is_some(),
        time_to_dock: docked_at,
        phase_switch_time: switch_at,
        total_impulse: m.total_impulse,
        angular_velocity_rms: m.angular_velocity_rms,
        angular_velocity_rms_norm: m.angular_velocity_rms_norm,
        activity: m.activity,
        steps: log.len(),
        qp_unconverged_steps: unconverged,
        final_state: state,
        diagnostic,
        trajectory: log,
    })
}

/// Runs one scenario per thruster set, in parallel; results keep input order.
pub fn batch(base: &ScenarioConfig, sets: &[Vec<usize>]) -> Vec<Result<SimResult>> {
    sets.par_iter()
        .map(|ids| {
            let cfg = ScenarioConfig {
                thruster_ids: ids.clone(),
                ..base.clone()
            };
            run(&cfg)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Reports

fn fixed(v: f64, digits: usize) -> String {
    format!("{v:.digits$}")
}

pub fn trajectory_csv(result: &SimResult) -> String {
    let mut out = String::from("t,x,y,z,vx,vy,vz,q0,q1,q2,q3,wx,wy,wz");
    for id in &result.thruster_ids {
        let _ = write!(out, ",f{id}");
    }
    out.push_str(",phase\n");
    for row in &result.trajectory {
        out.push_str(&fixed(row.t, 1));
        for v in row.state.iter().chain(&row.thrust) {
            out.push(',');
            out.push_str(&format!("{v:.9e}"));
        }
        let _ = writeln!(out, ",{}", row.phase);
    }
    out
}

/// Rows `(label, result)`; `label` is usually the thruster count.
pub fn activity_csv(rows: &[(usize, &SimResult)]) -> String {
    let mut out = String::from("n_thrusters,thruster_id,activity\n");
    for (n, r) in rows {
        for (id, a) in r.thruster_ids.iter().zip(&r.activity) {
            let _ = writeln!(out, "{n},{id},{}", fixed(*a, 6));
        }
    }
    out
}

pub fn rms_csv(rows: &[(usize, &SimResult)]) -> String {
    let mut out = String::from("n_thrusters,rms_wx,rms_wy,rms_wz,rms_norm\n");
    for (n, r) in rows {
        let w = r.angular_velocity_rms;
        let _ = writeln!(
            out,
            "{n},{:.9e},{:.9e},{:.9e},{:.9e}",
            w[0], w[1], w[2], r.angular_velocity_rms_norm
        );
    }
    out
}

/// Table-4 shaped summary. Entries with no result print `--`.
pub fn table4_csv(rows: &[(usize, Option<&SimResult>)]) -> String {
    let mut out = String::from("n_thrusters,time_to_dock_s,total_impulse_ns\n");
    for (n, r) in rows {
        match r {
            Some(r) => {
                let t = r.time_to_dock.map_or("--".to_string(), |t| fixed(t, 1));
                let _ = writeln!(out, "{n},{t},{}", fixed(r.total_impulse, 4));
            }
            None => {
                let _ = writeln!(out, "{n},--,--");
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTrends {
    pub mean_impulse_n_le_11: Option<f64>,
    pub mean_impulse_n_ge_12: Option<f64>,
    pub impulse_decreases: Option<bool>,
    pub mean_rms_n_le_11: Option<f64>,
    pub mean_rms_n_ge_12: Option<f64>,
    pub rms_decreases: Option<bool>,
    pub all_docked: bool,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn batch_trends(rows: &[(usize, &SimResult)]) -> BatchTrends {
    let pick = |lo: usize, hi: usize, f: fn(&SimResult) -> f64| -> Vec<f64> {
        rows.iter().filter(|(n, _)| (lo..=hi).contains(n)).map(|(_, r)| f(r)).collect()
    };
    let il = mean(&pick(0, 11, |r| r.total_impulse));
    let ih = mean(&pick(12, usize::MAX, |r| r.total_impulse));
    let rl = mean(&pick(0, 11, |r| r.angular_velocity_rms_norm));
    let rh = mean(&pick(12, usize::MAX, |r| r.angular_velocity_rms_norm));
    BatchTrends {
        mean_impulse_n_le_11: il,
        mean_impulse_n_ge_12: ih,
        impulse_decreases: il.zip(ih).map(|(l, h)| h < l),
        mean_rms_n_le_11: rl,
        mean_rms_n_ge_12: rh,
        rms_decreases: rl.zip(rh).map(|(l, h)| h < l),
        all_docked: rows.iter().all(|(_, r)| r.docked),
    }
}

fn write_file(dir: &Path, name: &str, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// `result.json`, `trajectory.csv`, `activity.csv`, `rms.csv` for one run.
pub fn emit_run(result: &SimResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let n = result.thruster_ids.len();
    let json = serde_json::to_string_pretty(result).expect("result serializes") + "\n";
    write_file(dir, "result.json", &json, &mut written)?;
    write_file(dir, "trajectory.csv", &trajectory_csv(result), &mut written)?;
    write_file(dir, "activity.csv", &activity_csv(&[(n, result)]), &mut written)?;
    write_file(dir, "rms.csv", &rms_csv(&[(n, result)]), &mut written)?;
    Ok(written)
}

/// `table4.csv`, `activity.csv`, `rms.csv`, `trends.json` and one
/// `trajectory_N{n}.csv` per run. `rows` must be ordered by thruster count;
/// counts below the first row are reported as unavailable.
pub fn emit_batch(rows: &[(usize, SimResult)], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let refs: Vec<(usize, &SimResult)> = rows.iter().map(|(n, r)| (*n, r)).collect();
    let mut table: Vec<(usize, Option<&SimResult>)> = vec![(6, None)];
    table.extend(refs.iter().filter(|(n, _)| *n > 6).map(|(n, r)| (*n, Some(*r))));
    write_file(dir, "table4.csv", &table4_csv(&table), &mut written)?;
    write_file(dir, "activity.csv", &activity_csv(&refs), &mut written)?;
    write_file(dir, "rms.csv", &rms_csv(&refs), &mut written)?;
    let trends = serde_json::to_string_pretty(&batch_trends(&refs)).expect("trends serialize") + "\n";
    write_file(dir, "trends.json", &trends, &mut written)?;
    for (n, r) in rows {
        write_file(dir, &format!("trajectory_N{n}.csv"), &trajectory_csv(r), &mut written)?;
    }
    Ok(written)
}

/// Rotation of the initial relative attitude, for reports.
pub fn initial_attitude_matrix(config: &ScenarioConfig) -> Result<Matrix3<f64>> {
    Ok(rotation_matrix(&config.initial.relative_state()?.q))
}
