//! Relative translational (Tschauner-Hempel) and attitude dynamics.
//!
//! State layout (13 slots): `[x, y, z, vx, vy, vz, q0, q1, q2, q3, wx, wy, wz]`,
//! LVLH position/velocity of the chaser, scalar-first relative quaternion and
//! relative body rate.

use nalgebra::{
    DMatrix, Matrix3, Matrix3x6, Matrix4, Matrix4x3, Matrix6, Matrix6x3, SMatrix, SVector, Vector3, Vector4,
    Vector6,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::AllocationMatrix;

pub const STATE_DIM: usize = 13;
pub type StateVector = SVector<f64, STATE_DIM>;
pub type StateMatrix = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type InputMatrix = SMatrix<f64, STATE_DIM, 6>;
pub type Quaternion = Vector4<f64>;

pub const EARTH_MU: f64 = 3.986e14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetOrbit {
    pub mu: f64,
    pub a: f64,
    pub e: f64,
    pub h: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub theta_ddot: f64,
}

impl TargetOrbit {
    pub fn new(mu: f64, a: f64, e: f64, theta: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0 && a.is_finite() && a > 0.0) {
            return Err(Error::domain(format!("orbit needs mu > 0 and a > 0, got {mu}, {a}")));
        }
        if !(0.0..1.0).contains(&e) {
            return Err(Error::domain(format!("eccentricity {e} outside [0, 1)")));
        }
        if !theta.is_finite() {
            return Err(Error::domain("true anomaly must be finite"));
        }
        let h = (mu * a * (1.0 - e * e)).sqrt();
        let mut orbit = TargetOrbit {
            mu,
            a,
            e,
            h,
            theta,
            theta_dot: 0.0,
            theta_ddot: 0.0,
        };
        orbit.refresh_rates();
        Ok(orbit)
    }

    pub fn semi_latus_rectum(&self) -> f64 {
        self.a * (1.0 - self.e * self.e)
    }

    pub fn radius(&self) -> f64 {
        self.radius_at(self.theta)
    }

    fn radius_at(&self, theta: f64) -> f64 {
        self.semi_latus_rectum() / (1.0 + self.e * theta.cos())
    }

    pub fn radius_rate(&self) -> f64 {
        self.mu / self.h * self.e * self.theta.sin()
    }

    pub fn mean_motion(&self) -> f64 {
        (self.mu / self.a.powi(3)).sqrt()
    }

    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.mean_motion()
    }

    fn refresh_rates(&mut self) {
        let r = self.radius();
        self.theta_dot = self.h / (r * r);
        self.theta_ddot = -2.0 * self.radius_rate() * self.theta_dot / r;
    }

    fn anomaly_rate(&self, theta: f64) -> f64 {
        let r = self.radius_at(theta);
        self.h / (r * r)
    }

    /// Advances the true anomaly by one RK4 step of `dtheta/dt = h / r^2`.
    pub fn propagate(&self, dt: f64) -> Result<TargetOrbit> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::domain(format!("orbit step {dt} must be positive")));
        }
        let t = self.theta;
        let k1 = self.anomaly_rate(t);
        let k2 = self.anomaly_rate(t + 0.5 * dt * k1);
        let k3 = self.anomaly_rate(t + 0.5 * dt * k2);
        let k4 = self.anomaly_rate(t + dt * k3);
        let mut next = *self;
        next.theta = t + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        next.refresh_rates();
        Ok(next)
    }

    /// `(theta_dot / h)^(3/2)`, equal to `1 / r^3`.
    pub fn inverse_cube_radius(&self) -> f64 {
        (self.theta_dot / self.h).powf(1.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeState {
    pub r: Vector3<f64>,
    pub v: Vector3<f64>,
    pub q: Quaternion,
    pub w: Vector3<f64>,
}

impl RelativeState {
    /// Co-located, aligned and at rest.
    pub fn docked() -> Self {
        RelativeState {
            r: Vector3::zeros(),
            v: Vector3::zeros(),
            q: Vector4::new(1.0, 0.0, 0.0, 0.0),
            w: Vector3::zeros(),
        }
    }

    pub fn to_vector(&self) -> StateVector {
        let mut x = StateVector::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&self.r);
        x.fixed_rows_mut::<3>(3).copy_from(&self.v);
        x.fixed_rows_mut::<4>(6).copy_from(&self.q);
        x.fixed_rows_mut::<3>(10).copy_from(&self.w);
        x
    }

    pub fn from_vector(x: &StateVector) -> Self {
        RelativeState {
            r: x.fixed_rows::<3>(0).into_owned(),
            v: x.fixed_rows::<3>(3).into_owned(),
            q: x.fixed_rows::<4>(6).into_owned(),
            w: x.fixed_rows::<3>(10).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|v| v.is_finite())
    }

    /// Rotation angle between `q` and the identity, radians.
    pub fn attitude_error(&self) -> f64 {
        let n = self.q.norm();
        2.0 * (self.q[0].abs() / n).min(1.0).acos()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InertiaModel {
    pub mass: f64,
    pub inertia: Matrix3<f64>,
    #[serde(skip)]
    inverse: Matrix3<f64>,
}

impl InertiaModel {
    pub fn new(mass: f64, inertia: Matrix3<f64>) -> Result<Self> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::domain(format!("mass {mass} must be positive")));
        }
        if (inertia - inertia.transpose()).abs().max() > 1e-12 * inertia.abs().max() {
            return Err(Error::domain("inertia must be symmetric"));
        }
        if inertia.cholesky().is_none() {
            return Err(Error::domain("inertia must be positive definite"));
        }
        let inverse = inertia
            .try_inverse()
            .ok_or_else(|| Error::domain("inertia is singular"))?;
        Ok(InertiaModel { mass, inertia, inverse })
    }

    /// Uniform solid cube: `I = m L^2 / 6` about each axis.
    pub fn uniform_cube(mass: f64, side: f64) -> Result<Self> {
        Self::new(mass, Matrix3::identity() * (mass * side * side / 6.0))
    }

    pub fn inverse(&self) -> &Matrix3<f64> {
        &self.inverse
    }
}

// ---------------------------------------------------------------------------
// Translation

/// Right-hand side of the Tschauner-Hempel equations for `[r; v]`. `u` is the
/// control acceleration in LVLH.
pub fn th_nonlinear_deriv(state: &Vector6<f64>, u: &Vector3<f64>, orbit: &TargetOrbit) -> Vector6<f64> {
    let (x, y, z) = (state[0], state[1], state[2]);
    let (vx, vy, vz) = (state[3], state[4], state[5]);
    let td = orbit.theta_dot;
    let tdd = orbit.theta_ddot;
    let g = orbit.mu * orbit.inverse_cube_radius();
    let ax = 2.0 * td * vy + tdd * y + td * td * x + 2.0 * g * x + u[0];
    let ay = -2.0 * td * vx - tdd * x + td * td * y - g * y + u[1];
    let az = -g * z + u[2];
    Vector6::new(vx, vy, vz, ax, ay, az)
}

/// Linear time-varying matrices `(A_t, B_t, C_t)` at the orbit's anomaly.
pub fn th_ltv(orbit: &TargetOrbit) -> (Matrix6<f64>, Matrix6x3<f64>, Matrix3x6<f64>) {
    let ec = orbit.e * orbit.theta.cos();
    let td2 = orbit.theta_dot * orbit.theta_dot;
    let td = orbit.theta_dot;
    let tdd = orbit.theta_ddot;
    let mut a = Matrix6::zeros();
    a[(0, 3)] = 1.0;
    a[(1, 4)] = 1.0;
    a[(2, 5)] = 1.0;
    a[(3, 0)] = (3.0 + ec) / (1.0 + ec) * td2;
    a[(3, 1)] = tdd;
    a[(3, 4)] = 2.0 * td;
    a[(4, 0)] = -tdd;
    a[(4, 1)] = ec / (1.0 + ec) * td2;
    a[(4, 3)] = -2.0 * td;
    a[(5, 2)] = -td2 / (1.0 + ec);
    let mut b = Matrix6x3::zeros();
    b.fixed_view_mut::<3, 3>(3, 0).copy_from(&Matrix3::identity());
    let mut c = Matrix3x6::zeros();
    c.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    (a, b, c)
}

// ---------------------------------------------------------------------------
// Attitude

pub fn quat_mul(p: &Quaternion, q: &Quaternion) -> Quaternion {
    let (p0, pv) = (p[0], Vector3::new(p[1], p[2], p[3]));
    let (q0, qv) = (q[0], Vector3::new(q[1], q[2], q[3]));
    let s = p0 * q0 - pv.dot(&qv);
    let v = qv * p0 + pv * q0 + pv.cross(&qv);
    Vector4::new(s, v[0], v[1], v[2])
}

pub fn quat_conj(q: &Quaternion) -> Quaternion {
    Vector4::new(q[0], -q[1], -q[2], -q[3])
}

/// `q_T^-1 (x) q_C`.
pub fn quat_relative(q_t: &Quaternion, q_c: &Quaternion) -> Quaternion {
    let inv = quat_conj(q_t) / q_t.norm_squared();
    quat_mul(&inv, q_c)
}

/// Rotation matrix of a unit quaternion (rotates body vectors into the
/// reference frame).
pub fn rotation_matrix(q: &Quaternion) -> Matrix3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Unit quaternion for a rotation of `angle` about `axis`.
pub fn quat_from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Result<Quaternion> {
    let n = axis.norm();
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::domain("rotation axis must be non-zero"));
    }
    let (s, c) = (0.5 * angle).sin_cos();
    let u = axis / n;
    Ok(Vector4::new(c, s * u[0], s * u[1], s * u[2]))
}

/// `w_C - R(q_rel) w_T`.
pub fn omega_rel(w_c: &Vector3<f64>, w_t: &Vector3<f64>, q_rel: &Quaternion) -> Vector3<f64> {
    w_c - rotation_matrix(q_rel) * w_t
}

pub fn omega_matrix(w: &Vector3<f64>) -> Matrix4<f64> {
    let (x, y, z) = (w[0], w[1], w[2]);
    Matrix4::new(
        0.0, -x, -y, -z, //
        x, 0.0, z, -y, //
        y, -z, 0.0, x, //
        z, y, -x, 0.0,
    )
}

/// `0.5 * Omega(w) q == 0.5 * xi(q) w`.
fn xi_matrix(q: &Quaternion) -> Matrix4x3<f64> {
    let (q0, q1, q2, q3) = (q[0], q[1], q[2], q[3]);
    Matrix4x3::new(
        -q1, -q2, -q3, //
        q0, -q3, q2, //
        q3, q0, -q1, //
        -q2, q1, q0,
    )
}

pub fn quat_kinematics(q: &Quaternion, w: &Vector3<f64>) -> Quaternion {
    omega_matrix(w) * q * 0.5
}

/// Euler's equation `I^-1 (tau - w x I w)`.
pub fn attitude_deriv(w: &Vector3<f64>, tau: &Vector3<f64>, inertia: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let inv = inertia
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::domain("inertia is singular"))?;
    Ok(inv * (tau - w.cross(&(inertia * w))))
}

fn euler_rhs(w: &Vector3<f64>, tau: &Vector3<f64>, model: &InertiaModel) -> Vector3<f64> {
    model.inverse * (tau - w.cross(&(model.inertia * w)))
}

/// Analytic Jacobians of the attitude equations about `(q, w)`:
/// state `[q; w]` (7), input torque (3).
pub fn attitude_jacobians(
    q: &Quaternion,
    w: &Vector3<f64>,
    model: &InertiaModel,
) -> (SMatrix<f64, 7, 7>, SMatrix<f64, 7, 3>) {
    let mut a = SMatrix::<f64, 7, 7>::zeros();
    a.fixed_view_mut::<4, 4>(0, 0).copy_from(&(omega_matrix(w) * 0.5));
    a.fixed_view_mut::<4, 3>(0, 4).copy_from(&(xi_matrix(q) * 0.5));
    let iw = model.inertia * w;
    let dw = model.inverse * (iw.cross_matrix() - w.cross_matrix() * model.inertia);
    a.fixed_view_mut::<3, 3>(4, 4).copy_from(&dw);
    let mut b = SMatrix::<f64, 7, 3>::zeros();
    b.fixed_view_mut::<3, 3>(4, 0).copy_from(&model.inverse);
    (a, b)
}

/// Block-diagonal 13-state model. Inputs are `[accel or force; torque]`
/// according to how `b_t` was scaled.
pub fn combine(
    a_t: &Matrix6<f64>,
    b_t: &Matrix6x3<f64>,
    a_a: &SMatrix<f64, 7, 7>,
    b_a: &SMatrix<f64, 7, 3>,
) -> (StateMatrix, InputMatrix) {
    let mut a = StateMatrix::zeros();
    a.fixed_view_mut::<6, 6>(0, 0).copy_from(a_t);
    a.fixed_view_mut::<7, 7>(6, 6).copy_from(a_a);
    let mut b = InputMatrix::zeros();
    b.fixed_view_mut::<6, 3>(0, 0).copy_from(b_t);
    b.fixed_view_mut::<7, 3>(6, 3).copy_from(b_a);
    (a, b)
}

/// Full continuous derivative with wrench input `[force N; torque N m]`.
pub fn state_deriv(
    x: &StateVector,
    wrench: &Vector6<f64>,
    model: &InertiaModel,
    orbit: &TargetOrbit,
) -> StateVector {
    let tr: Vector6<f64> = x.fixed_rows::<6>(0).into_owned();
    let q: Quaternion = x.fixed_rows::<4>(6).into_owned();
    let w: Vector3<f64> = x.fixed_rows::<3>(10).into_owned();
    let force: Vector3<f64> = wrench.fixed_rows::<3>(0).into_owned();
    let tau: Vector3<f64> = wrench.fixed_rows::<3>(3).into_owned();
    let mut dx = StateVector::zeros();
    dx.fixed_rows_mut::<6>(0)
        .copy_from(&th_nonlinear_deriv(&tr, &(force / model.mass), orbit));
    dx.fixed_rows_mut::<4>(6).copy_from(&quat_kinematics(&q, &w));
    dx.fixed_rows_mut::<3>(10).copy_from(&euler_rhs(&w, &tau, model));
    dx
}

/// Continuous linearization about `x`: `dx/dt ~= A x + B [force; torque] + c`.
/// The translational block is exact; `c` carries the attitude offset.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousModel {
    pub a: StateMatrix,
    pub b: InputMatrix,
    pub c: StateVector,
}

pub fn linearize(x: &StateVector, model: &InertiaModel, orbit: &TargetOrbit) -> ContinuousModel {
    let (a_t, b_t, _) = th_ltv(orbit);
    let q: Quaternion = x.fixed_rows::<4>(6).into_owned();
    let w: Vector3<f64> = x.fixed_rows::<3>(10).into_owned();
    let (a_a, b_a) = attitude_jacobians(&q, &w, model);
    let (a, b) = combine(&a_t, &(b_t / model.mass), &a_a, &b_a);
    let f0 = state_deriv(x, &Vector6::zeros(), model, orbit);
    let mut c = f0 - a * x;
    // translational part is linear already
    c.fixed_rows_mut::<6>(0).fill(0.0);
    ContinuousModel { a, b, c }
}

// ---------------------------------------------------------------------------
// Discretization

/// Matrix exponential by scaling and squaring with a Taylor series.
pub fn expm(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::domain("expm needs a square matrix"));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("expm input is not finite".into()));
    }
    let norm = m.column_iter().map(|c| c.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut squarings = 0u32;
    if norm > 0.5 {
        squarings = (norm / 0.5).log2().ceil() as u32;
    }
    if squarings > 60 {
        return Err(Error::Numeric(format!("expm norm {norm} too large")));
    }
    let scaled = m / 2f64.powi(squarings as i32);
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    // ||scaled|| <= 0.5: 18 terms put the truncation far below round-off
    for k in 1..=18 {
        term = &term * &scaled / k as f64;
        result += &term;
        if term.amax() <= f64::EPSILON * 1e-3 * result.amax() {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    if result.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("expm overflowed".into()));
    }
    Ok(result)
}

/// Zero-order-hold discretization via the augmented exponential
/// `exp([[A, B], [0, 0]] Ts)`.
pub fn discretize(a: &DMatrix<f64>, b: &DMatrix<f64>, ts: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(ts.is_finite() && ts > 0.0) {
        return Err(Error::domain(format!("sample time {ts} must be positive")));
    }
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::domain("discretize: A must be square and B must match its rows"));
    }
    let m = b.ncols();
    let mut aug = DMatrix::<f64>::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * ts));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * ts));
    let e = expm(&aug)?;
    Ok((e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned()))
}

/// Discrete affine model `x+ = A x + B [force; torque] + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteModel {
    pub a: StateMatrix,
    pub b: InputMatrix,
    pub c: StateVector,
}

pub fn discretize_model(model: &ContinuousModel, ts: f64) -> Result<DiscreteModel> {
    let a = DMatrix::from_column_slice(STATE_DIM, STATE_DIM, model.a.as_slice());
    let mut b = DMatrix::<f64>::zeros(STATE_DIM, 7);
    b.view_mut((0, 0), (STATE_DIM, 6)).copy_from(&model.b);
    b.column_mut(6).copy_from(&model.c);
    let (ad, bd) = discretize(&a, &b, ts)?;
    Ok(DiscreteModel {
        a: StateMatrix::from_column_slice(ad.as_slice()),
        b: InputMatrix::from_column_slice(&bd.as_slice()[..STATE_DIM * 6]),
        c: StateVector::from_column_slice(&bd.as_slice()[STATE_DIM * 6..]),
    })
}

// ---------------------------------------------------------------------------
// Truth propagation

/// Normalizes the quaternion and picks the `q0 >= 0` hemisphere.
pub fn normalize_quaternion(q: &Quaternion) -> Quaternion {
    let n = q.norm();
    let q = q / n;
    if q[0] < 0.0 {
        -q
    } else {
        q
    }
}

/// One RK4 step of the full model with thruster magnitudes held over `dt`.
/// Returns the new state; the orbit must be advanced separately.
pub fn nonlinear_step(
    state: &RelativeState,
    magnitudes: &[f64],
    alloc: &AllocationMatrix,
    model: &InertiaModel,
    orbit: &TargetOrbit,
    dt: f64,
) -> Result<RelativeState> {
    if magnitudes.iter().any(|f| !(f.is_finite() && *f >= 0.0)) {
        return Err(Error::domain("thruster magnitudes must be finite and non-negative"));
    }
    if magnitudes.len() != alloc.len() {
        return Err(Error::domain(format!(
            "{} magnitudes for {} thrusters",
            magnitudes.len(),
            alloc.len()
        )));
    }
    let wrench = alloc.apply(magnitudes);
    let mid = orbit.propagate(0.5 * dt)?;
    let end = orbit.propagate(dt)?;
    let x = state.to_vector();
    let k1 = state_deriv(&x, &wrench, model, orbit);
    let k2 = state_deriv(&(x + k1 * (0.5 * dt)), &wrench, model, &mid);
    let k3 = state_deriv(&(x + k2 * (0.5 * dt)), &wrench, model, &mid);
    let k4 = state_deriv(&(x + k3 * dt), &wrench, model, &end);
    let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    let mut out = RelativeState::from_vector(&next);
    out.q = normalize_quaternion(&out.q);
    if !out.is_finite() {
        return Err(Error::Numeric("state became non-finite".into()));
    }
    Ok(out)
}
