//! Linear time-varying MPC over individual thruster magnitudes.
//!
//! Each step the full model is linearized about the measured state, the
//! horizon is condensed into a dense box-constrained QP in the stacked thrust
//! vector, and the QP is solved by accelerated projected gradient.

use nalgebra::{DMatrix, DVector, Vector3, Vector4};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    discretize_model, linearize, th_ltv, DiscreteModel, InertiaModel, Quaternion, RelativeState, StateVector, TargetOrbit, STATE_DIM,
};
use crate::error::{Error, Result};
use crate::geometry::AllocationMatrix;

/// Default `P / Q` ratio. With a 10-step horizon a smaller terminal weight
/// leaves the docking phase underdamped.
pub const TERMINAL_SCALE: f64 = 100.0;

/// Cost weights of one phase. `R` and `R_df` are scalar multiples of the
/// identity; `Q` and `P` are diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcWeights {
    pub q: Vec<f64>,
    pub r: f64,
    pub r_df: f64,
    pub p: Vec<f64>,
    pub rho: f64,
}

impl MpcWeights {
    /// `P = p_scale * Q`.
    pub fn new(q: Vec<f64>, r: f64, r_df: f64, p_scale: f64, rho: f64) -> Result<Self> {
        let p = q.iter().map(|v| v * p_scale).collect();
        let w = MpcWeights { q, r, r_df, p, rho };
        w.validate()?;
        Ok(w)
    }

    /// Approach-phase weights.
    pub fn phase1() -> Self {
        let mut q = vec![8.0; 6];
        q.extend([5.0; 7]);
        let q = q.into_iter().map(|v| 100.0 * v).collect();
        Self::new(q, 500.0, 1000.0, TERMINAL_SCALE, 1e3).expect("built-in weights are valid")
    }

    /// Final docking-phase weights.
    pub fn phase2() -> Self {
        let q = [0.9, 0.9, 0.9, 5.0, 5.0, 5.0, 10.0, 10.0, 10.0, 10.0, 1.0, 1.0, 1.0]
            .iter()
            .map(|v| 1e4 * v)
            .collect();
        Self::new(q, 5e4, 5e4, TERMINAL_SCALE, 1e3).expect("built-in weights are valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.q.len() != STATE_DIM || self.p.len() != STATE_DIM {
            return Err(Error::domain(format!("Q and P need {STATE_DIM} diagonal entries")));
        }
        if self.q.iter().chain(&self.p).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::domain("Q and P entries must be finite and non-negative"));
        }
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(Error::domain(format!("R weight {} must be positive", self.r)));
        }
        if !(self.r_df.is_finite() && self.r_df >= 0.0) || !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(Error::domain("R_df and rho must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSchedule {
    pub phase1: MpcWeights,
    pub phase2: MpcWeights,
    /// Intermediate waypoint position, LVLH metres.
    pub waypoint: Vector3<f64>,
    pub switch_pos_tol: f64,
    pub switch_vel_tol: f64,
}

impl Default for PhaseSchedule {
    fn default() -> Self {
        PhaseSchedule {
            phase1: MpcWeights::phase1(),
            phase2: MpcWeights::phase2(),
            waypoint: Vector3::new(2.0, 0.0, 0.0),
            switch_pos_tol: 0.1,
            switch_vel_tol: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalSet {
    pub r_tol: f64,
    pub v_tol: f64,
    /// Radians.
    pub alpha_tol: f64,
}

impl Default for TerminalSet {
    fn default() -> Self {
        TerminalSet {
            r_tol: 0.05,
            v_tol: 0.01,
            alpha_tol: 2f64.to_radians(),
        }
    }
}

impl TerminalSet {
    pub fn validate(&self) -> Result<()> {
        if [self.r_tol, self.v_tol, self.alpha_tol]
            .iter()
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(Error::domain("terminal tolerances must be positive"));
        }
        Ok(())
    }

    pub fn contains(&self, s: &RelativeState) -> bool {
        s.r.norm() <= self.r_tol && s.v.norm() <= self.v_tol && s.attitude_error() <= self.alpha_tol
    }
}

/// How the per-step reference states are generated within a phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceMode {
    /// Hold the phase goal state over the whole horizon.
    Fixed,
    /// Straight-line path from where the phase began to its goal, and an
    /// eigen-axis slew from the starting attitude to the goal attitude. Each
    /// speed ramps up at its acceleration, is capped, and decays as
    /// `remaining / time_constant` near the goal.
    Profiled {
        max_speed: f64,
        accel: f64,
        /// rad/s.
        max_rate: f64,
        /// rad/s^2.
        angular_accel: f64,
        time_constant: f64,
    },
}

impl Default for ReferenceMode {
    fn default() -> Self {
        ReferenceMode::Profiled {
            max_speed: 0.05,
            accel: 0.00125,
            max_rate: 0.5f64.to_radians(),
            angular_accel: 0.05f64.to_radians(),
            time_constant: 20.0,
        }
    }
}

impl ReferenceMode {
    pub fn validate(&self) -> Result<()> {
        if let ReferenceMode::Profiled {
            max_speed,
            accel,
            max_rate,
            angular_accel,
            time_constant,
        } = *self
        {
            if [max_speed, accel, max_rate, angular_accel, time_constant]
                .iter()
                .any(|v| !(v.is_finite() && *v > 0.0))
            {
                return Err(Error::domain("reference profile parameters must be positive"));
            }
        }
        Ok(())
    }
}

const MAX_PROFILE_SAMPLES: usize = 1_000_000;

/// Distance covered and speed at each control period along a 1-D profile.
fn speed_profile(dist: f64, max_speed: f64, accel: f64, time_constant: f64, ts: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut travelled = 0.0;
    // stop once the remaining gap is negligible
    while dist - travelled > 1e-6 * dist.max(1.0) && out.len() < MAX_PROFILE_SAMPLES {
        let t = out.len() as f64 * ts;
        let speed = max_speed.min(accel * t).min((dist - travelled) / time_constant);
        out.push((travelled, speed));
        travelled += speed * ts;
    }
    out
}

/// Sampled reference, one sample per control period. Past the end of a
/// profile the goal is held at rest.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferencePath {
    goal: Vector3<f64>,
    positions: Vec<Vector3<f64>>,
    velocities: Vec<Vector3<f64>>,
    attitudes: Vec<Quaternion>,
    rates: Vec<Vector3<f64>>,
}

impl ReferencePath {
    /// Translational path plus a slew from `start_q` to the identity.
    pub fn new(
        start: Vector3<f64>,
        goal: Vector3<f64>,
        start_q: &Quaternion,
        mode: ReferenceMode,
        ts: f64,
    ) -> Self {
        let mut path = ReferencePath {
            goal,
            positions: Vec::new(),
            velocities: Vec::new(),
            attitudes: Vec::new(),
            rates: Vec::new(),
        };
        let ReferenceMode::Profiled {
            max_speed,
            accel,
            max_rate,
            angular_accel,
            time_constant,
        } = mode
        else {
            return path;
        };
        let span = goal - start;
        let dist = span.norm();
        if dist > 0.0 {
            let dir = span / dist;
            for (s, v) in speed_profile(dist, max_speed, accel, time_constant, ts) {
                path.positions.push(start + dir * s);
                path.velocities.push(dir * v);
            }
        }
        // shortest rotation: q and -q are the same attitude
        let q = if start_q[0] < 0.0 { -start_q } else { *start_q };
        let q = q / q.norm();
        let vec = Vector3::new(q[1], q[2], q[3]);
        let angle = 2.0 * vec.norm().atan2(q[0]);
        if angle > 0.0 && vec.norm() > 0.0 {
            let axis = vec / vec.norm();
            for (s, v) in speed_profile(angle, max_rate, angular_accel, time_constant, ts) {
                let remaining = angle - s;
                let (sn, cs) = (0.5 * remaining).sin_cos();
                path.attitudes.push(Vector4::new(cs, sn * axis[0], sn * axis[1], sn * axis[2]));
                path.rates.push(-axis * v);
            }
        }
        path
    }

    /// Reference state `j` periods after the path started.
    pub fn sample(&self, j: usize) -> RelativeState {
        let mut s = RelativeState::docked();
        s.r = self.goal;
        if let (Some(p), Some(v)) = (self.positions.get(j), self.velocities.get(j)) {
            s.r = *p;
            s.v = *v;
        }
        if let (Some(q), Some(w)) = (self.attitudes.get(j), self.rates.get(j)) {
            s.q = *q;
            s.w = *w;
        }
        s
    }

    /// Number of samples before both profiles have settled on the goal.
    pub fn len(&self) -> usize {
        self.positions.len().max(self.attitudes.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpSettings {
    pub max_iterations: usize,
    /// Relative KKT tolerance.
    pub tolerance: f64,
}

impl Default for QpSettings {
    fn default() -> Self {
        QpSettings {
            max_iterations: 5000,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub horizon: usize,
    pub ts: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub schedule: PhaseSchedule,
    pub terminal: TerminalSet,
    pub qp: QpSettings,
    pub reference: ReferenceMode,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            horizon: 10,
            ts: 0.1,
            f_min: 0.0,
            f_max: 0.05,
            schedule: PhaseSchedule::default(),
            terminal: TerminalSet::default(),
            qp: QpSettings::default(),
            reference: ReferenceMode::default(),
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::domain("horizon must be at least 1"));
        }
        if !(self.ts.is_finite() && self.ts > 0.0) {
            return Err(Error::domain("sample time must be positive"));
        }
        if !(self.f_min.is_finite() && self.f_max.is_finite() && 0.0 <= self.f_min && self.f_min <= self.f_max) {
            return Err(Error::domain(format!(
                "thrust bounds [{}, {}] must satisfy 0 <= f_min <= f_max",
                self.f_min, self.f_max
            )));
        }
        self.schedule.phase1.validate()?;
        self.schedule.phase2.validate()?;
        self.terminal.validate()?;
        self.reference.validate()?;
        if !(self.schedule.switch_pos_tol > 0.0 && self.schedule.switch_vel_tol > 0.0) {
            return Err(Error::domain("phase switch tolerances must be positive"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Prediction

/// Per-step discrete models over the horizon. Inputs of `steps` are wrenches;
/// `b_thrust` composes them with the allocation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub steps: Vec<DiscreteModel>,
    pub alloc: DMatrix<f64>,
}

impl Prediction {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn n_thrusters(&self) -> usize {
        self.alloc.ncols()
    }

    /// `A_i` of step `i`.
    pub fn a(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(STATE_DIM, STATE_DIM, self.steps[i].a.as_slice())
    }

    /// `B_i = B_pre,i * B_alloc`, 13 x N.
    pub fn b_thrust(&self, i: usize) -> DMatrix<f64> {
        DMatrix::from_column_slice(STATE_DIM, 6, self.steps[i].b.as_slice()) * &self.alloc
    }

    /// States `x_0..x_N` under the stacked thrust sequence.
    pub fn rollout(&self, x0: &StateVector, f: &[f64]) -> Vec<StateVector> {
        let n = self.n_thrusters();
        let mut xs = vec![*x0];
        for (i, step) in self.steps.iter().enumerate() {
            let fi = DVector::from_column_slice(&f[i * n..(i + 1) * n]);
            let w = &self.alloc * fi;
            let w6 = nalgebra::Vector6::from_column_slice(w.as_slice());
            let next = step.a * xs[i] + step.b * w6 + step.c;
            xs.push(next);
        }
        xs
    }
}

/// Linearizes about the current state; the attitude Jacobian is frozen over
/// the horizon while the orbital terms follow the target's true anomaly.
pub fn build_prediction(
    x: &RelativeState,
    orbit: &TargetOrbit,
    alloc: &AllocationMatrix,
    inertia: &InertiaModel,
    ts: f64,
    horizon: usize,
) -> Result<Prediction> {
    if horizon == 0 {
        return Err(Error::domain("horizon must be at least 1"));
    }
    if !x.is_finite() {
        return Err(Error::domain("state is not finite"));
    }
    let xv = x.to_vector();
    let mut steps = Vec::with_capacity(horizon);
    let mut o = *orbit;
    let base = linearize(&xv, inertia, orbit);
    for i in 0..horizon {
        if i > 0 {
            o = o.propagate(ts)?;
        }
        let mut cm = base.clone();
        cm.a.fixed_view_mut::<6, 6>(0, 0).copy_from(&th_ltv(&o).0);
        steps.push(discretize_model(&cm, ts)?);
    }
    Ok(Prediction {
        steps,
        alloc: alloc.to_matrix(),
    })
}

// ---------------------------------------------------------------------------
// QP

/// `minimize 0.5 f^T H f + g^T f + c` subject to `lower <= f <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    pub horizon: usize,
    pub n_thrusters: usize,
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub constant: f64,
    pub lower: f64,
    pub upper: f64,
}

impl MpcProblem {
    pub fn n_vars(&self) -> usize {
        self.gradient.len()
    }

    pub fn objective(&self, f: &[f64]) -> f64 {
        let x = DVector::from_column_slice(f);
        0.5 * x.dot(&(&self.hessian * &x)) + self.gradient.dot(&x) + self.constant
    }

    /// Norm of the projected gradient; zero exactly at the box-QP optimum.
    pub fn kkt_residual(&self, f: &[f64]) -> f64 {
        let x = DVector::from_column_slice(f);
        let g = &self.hessian * &x + &self.gradient;
        projected_gradient_norm(f, g.as_slice(), self.lower, self.upper)
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lo: f64, hi: f64) -> f64 {
    x.iter()
        .zip(g)
        .map(|(&xi, &gi)| {
            let p = if xi <= lo {
                gi.min(0.0)
            } else if xi >= hi {
                gi.max(0.0)
            } else {
                gi
            };
            p * p
        })
        .sum::<f64>()
        .sqrt()
}

/// Condenses the horizon into a QP over the stacked thrusts
/// `[f_0; ...; f_{N-1}]`. The objective equals the stage costs for
/// `i = 0..N-1`, the terminal cost with `P`, and the terminal quaternion-norm
/// penalty linearized about the quaternion of `x0`.
pub fn assemble_qp(
    pred: &Prediction,
    x0: &StateVector,
    reference: &[StateVector],
    weights: &MpcWeights,
    prev_f: &[f64],
    bounds: (f64, f64),
) -> Result<MpcProblem> {
    let horizon = pred.horizon();
    let n = pred.n_thrusters();
    if reference.len() != horizon + 1 {
        return Err(Error::domain(format!(
            "reference has {} states, horizon needs {}",
            reference.len(),
            horizon + 1
        )));
    }
    if prev_f.len() != n {
        return Err(Error::domain(format!("previous thrust has {} entries, need {n}", prev_f.len())));
    }
    weights.validate()?;
    let (lower, upper) = bounds;
    if lower > upper || lower.is_nan() || upper.is_nan() {
        return Err(Error::domain("lower bound exceeds upper bound"));
    }

    let nw = 6 * horizon;
    // Free response and sensitivity of x_i to the stacked wrenches.
    let mut free = vec![*x0];
    let mut sens: Vec<DMatrix<f64>> = vec![DMatrix::zeros(STATE_DIM, nw)];
    for (i, step) in pred.steps.iter().enumerate() {
        let a = DMatrix::from_column_slice(STATE_DIM, STATE_DIM, step.a.as_slice());
        let mut g = &a * &sens[i];
        g.view_mut((0, 6 * i), (STATE_DIM, 6)).copy_from(&step.b);
        sens.push(g);
        free.push(step.a * free[i] + step.c);
    }

    let q0: Vector4<f64> = x0.fixed_rows::<4>(6).into_owned();
    let mut quat_dir = DVector::<f64>::zeros(STATE_DIM);
    for k in 0..4 {
        quat_dir[6 + k] = 2.0 * q0[k];
    }
    let q_ref_n: Vector4<f64> = reference[horizon].fixed_rows::<4>(6).into_owned();
    // linearized phi at the terminal state: quat_dir . x_N - (|q0|^2 + 1)
    let beta = 2.0 * q0.dot(&q_ref_n) - (q0.norm_squared() + 1.0);

    let mut hw = DMatrix::<f64>::zeros(nw, nw);
    let mut gw = DVector::<f64>::zeros(nw);
    let mut constant = 0.0;
    {
        let e0 = x0 - reference[0];
        constant += e0.iter().zip(&weights.q).map(|(e, w)| w * e * e).sum::<f64>();
    }
    for i in 1..=horizon {
        let diag = if i == horizon { &weights.p } else { &weights.q };
        let e = free[i] - reference[i];
        let mut scaled = sens[i].clone();
        for (r, w) in diag.iter().enumerate() {
            scaled.row_mut(r).scale_mut(*w);
        }
        hw += sens[i].transpose() * &scaled * 2.0;
        let we = DVector::from_iterator(STATE_DIM, e.iter().zip(diag).map(|(e, w)| w * e));
        gw += sens[i].transpose() * we * 2.0;
        constant += e.iter().zip(diag).map(|(e, w)| w * e * e).sum::<f64>();
        if i == horizon && weights.rho > 0.0 {
            let rho = weights.rho;
            let e_dyn = DVector::from_column_slice(e.as_slice());
            let gs = sens[i].transpose() * &quat_dir;
            hw += &gs * gs.transpose() * (2.0 * rho);
            let lin = quat_dir.dot(&e_dyn) + beta;
            gw += &gs * (2.0 * rho * lin);
            constant += rho * lin * lin;
        }
    }

    // Map wrench space to thrusts: H = F^T Hw F, F = blockdiag(B_alloc).
    let nv = n * horizon;
    let alloc = &pred.alloc;
    let mut hw_f = DMatrix::<f64>::zeros(nw, nv);
    for j in 0..horizon {
        let block = hw.columns(6 * j, 6) * alloc;
        hw_f.columns_mut(n * j, n).copy_from(&block);
    }
    let mut h = DMatrix::<f64>::zeros(nv, nv);
    let mut g = DVector::<f64>::zeros(nv);
    let alloc_t = alloc.transpose();
    for i in 0..horizon {
        let rows = &alloc_t * hw_f.rows(6 * i, 6);
        h.rows_mut(n * i, n).copy_from(&rows);
        let gi = &alloc_t * gw.rows(6 * i, 6);
        g.rows_mut(n * i, n).copy_from(&gi);
    }

    // Effort and slew terms.
    for i in 0..horizon {
        let slew_diag = if i + 1 < horizon { 2.0 } else { 1.0 };
        for k in 0..n {
            let d = n * i + k;
            h[(d, d)] += 2.0 * (weights.r + slew_diag * weights.r_df);
            if i + 1 < horizon {
                h[(d, d + n)] -= 2.0 * weights.r_df;
                h[(d + n, d)] -= 2.0 * weights.r_df;
            }
        }
    }
    for (k, pf) in prev_f.iter().enumerate() {
        g[k] -= 2.0 * weights.r_df * pf;
        constant += weights.r_df * pf * pf;
    }
    // enforce exact symmetry against round-off
    let h = (&h + h.transpose()) * 0.5;

    Ok(MpcProblem {
        horizon,
        n_thrusters: n,
        hessian: h,
        gradient: g,
        constant,
        lower,
        upper,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution {
    pub f: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub kkt_residual: f64,
}

/// Accelerated projected gradient (FISTA) with gradient-based restart.
/// Never fails: at the iteration cap the best iterate is returned with
/// `converged = false` and a warning is logged.
pub fn solve_qp(problem: &MpcProblem, warm_start: Option<&[f64]>, settings: &QpSettings) -> QpSolution {
    let n = problem.n_vars();
    let (lo, hi) = (problem.lower, problem.upper);
    let clamp = |v: f64| v.clamp(lo, hi);
    let h = &problem.hessian;
    let g0 = &problem.gradient;
    let tol = settings.tolerance * (1.0 + g0.norm());

    // Gershgorin bound on the largest eigenvalue.
    let lip = (0..n)
        .map(|r| h.row(r).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);

    let mut x = DVector::<f64>::from_fn(n, |i, _| warm_start.and_then(|w| w.get(i)).map_or(lo, |&v| clamp(v)));
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut grad_x = h * &x + g0;
    let mut best = (projected_gradient_norm(x.as_slice(), grad_x.as_slice(), lo, hi), x.clone());
    let mut iterations = 0;
    let mut converged = best.0 <= tol;

    while !converged && iterations < settings.max_iterations {
        iterations += 1;
        let grad_y = h * &y + g0;
        let mut x_new = &y - grad_y / lip;
        x_new.apply(|v| *v = clamp(*v));
        grad_x = h * &x_new + g0;
        let kkt = projected_gradient_norm(x_new.as_slice(), grad_x.as_slice(), lo, hi);
        if kkt < best.0 {
            best = (kkt, x_new.clone());
        }
        if kkt <= tol {
            converged = true;
            x = x_new;
            break;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let step = &x_new - &x;
        if (&y - &x_new).dot(&step) > 0.0 {
            // momentum points uphill: restart
            t = 1.0;
            y = x_new.clone();
        } else {
            y = &x_new + step * ((t - 1.0) / t_new);
            t = t_new;
        }
        x = x_new;
    }
    let final_x = if converged { x } else { best.1 };
    let kkt_residual = problem.kkt_residual(final_x.as_slice());
    if !converged {
        log::warn!(
            "qp hit the iteration cap ({iterations}); kkt residual {kkt_residual:.3e} vs tolerance {tol:.3e}"
        );
    }
    let f: Vec<f64> = final_x.iter().copied().collect();
    QpSolution {
        objective: problem.objective(&f),
        f,
        iterations,
        converged,
        kkt_residual,
    }
}

// ---------------------------------------------------------------------------
// Controller

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Approach,
    Docking,
}

impl Phase {
    pub fn index(self) -> u8 {
        match self {
            Phase::Approach => 1,
            Phase::Docking => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub phase: Phase,
    pub switched: bool,
    pub in_terminal_set: bool,
    pub qp_iterations: usize,
    pub qp_converged: bool,
    pub objective: f64,
    pub kkt_residual: f64,
}

/// Receding-horizon controller; owns the phase, last applied thrust and the
/// warm start.
#[derive(Debug, Clone)]
pub struct Controller {
    config: MpcConfig,
    alloc: AllocationMatrix,
    inertia: InertiaModel,
    phase: Phase,
    prev_f: Vec<f64>,
    warm: Option<Vec<f64>>,
    path: Option<ReferencePath>,
    /// Control steps taken since the current phase began.
    phase_step: usize,
}

impl Controller {
    pub fn new(config: MpcConfig, alloc: AllocationMatrix, inertia: InertiaModel) -> Result<Self> {
        config.validate()?;
        let n = alloc.len();
        Ok(Controller {
            config,
            alloc,
            inertia,
            phase: Phase::Approach,
            prev_f: vec![0.0; n],
            warm: None,
            path: None,
            phase_step: 0,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    pub fn previous_thrust(&self) -> &[f64] {
        &self.prev_f
    }

    fn goal(&self) -> Vector3<f64> {
        match self.phase {
            Phase::Approach => self.config.schedule.waypoint,
            Phase::Docking => Vector3::zeros(),
        }
    }

    /// Reference states for horizon steps `0..=N`.
    pub fn reference(&self) -> Vec<StateVector> {
        let horizon = self.config.horizon;
        (0..=horizon)
            .map(|i| {
                match &self.path {
                    Some(path) => path.sample(self.phase_step + i).to_vector(),
                    None => {
                        let mut target = RelativeState::docked();
                        target.r = self.goal();
                        target.to_vector()
                    }
                }
            })
            .collect()
    }

    fn maybe_switch(&mut self, x: &RelativeState) -> bool {
        let s = &self.config.schedule;
        if self.phase == Phase::Approach
            && (x.r - s.waypoint).norm() <= s.switch_pos_tol
            && x.v.norm() <= s.switch_vel_tol
        {
            self.phase = Phase::Docking;
            self.warm = None;
            self.path = None;
            self.phase_step = 0;
            return true;
        }
        false
    }

    /// Solves one horizon and returns the first thrust vector.
    pub fn control_step(&mut self, x: &RelativeState, orbit: &TargetOrbit) -> Result<(Vec<f64>, StepDiagnostics)> {
        let switched = self.maybe_switch(x);
        if self.path.is_none() && self.config.reference != ReferenceMode::Fixed {
            self.path = Some(ReferencePath::new(x.r, self.goal(), &x.q, self.config.reference, self.config.ts));
        }
        let reference = self.reference();
        let cfg = &self.config;
        let weights = match self.phase {
            Phase::Approach => &cfg.schedule.phase1,
            Phase::Docking => &cfg.schedule.phase2,
        };
        let pred = build_prediction(x, orbit, &self.alloc, &self.inertia, cfg.ts, cfg.horizon)?;
        let problem = assemble_qp(
            &pred,
            &x.to_vector(),
            &reference,
            weights,
            &self.prev_f,
            (cfg.f_min, cfg.f_max),
        )?;
        let sol = solve_qp(&problem, self.warm.as_deref(), &cfg.qp);
        let n = self.alloc.len();
        let applied = sol.f[..n].to_vec();
        let mut warm = sol.f[n..].to_vec();
        warm.extend_from_slice(&sol.f[sol.f.len() - n..]);
        self.warm = Some(warm);
        self.prev_f = applied.clone();
        self.phase_step += 1;
        let diag = StepDiagnostics {
            phase: self.phase,
            switched,
            in_terminal_set: cfg.terminal.contains(x),
            qp_iterations: sol.iterations,
            qp_converged: sol.converged,
            objective: sol.objective,
            kkt_residual: sol.kkt_residual,
        };
        Ok((applied, diag))
    }
}
