mod common;

use common::{central_jacobian, cw_transition, integrate_transition};
use cubethrust::dynamics::{
    discretize, expm, linearize, nonlinear_step, state_deriv, th_ltv, InertiaModel, RelativeState, StateVector,
    TargetOrbit, EARTH_MU, STATE_DIM,
};
use cubethrust::geometry::{FaceAngles, Layout};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector4, Vector6};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax().max(1e-300)
}

fn lopsided() -> InertiaModel {
    let i = Matrix3::new(0.021, 0.002, -0.001, 0.002, 0.017, 0.0015, -0.001, 0.0015, 0.013);
    InertiaModel::new(4.0, i).unwrap()
}

fn random_state(rng: &mut ChaCha8Rng) -> StateVector {
    let q = Vector4::from_fn(|_, _| rng.gen_range(-1.0..1.0)).normalize();
    let mut x = StateVector::zeros();
    for k in 0..6 {
        x[k] = rng.gen_range(-20.0..20.0) * if k < 3 { 1.0 } else { 0.01 };
    }
    x.fixed_rows_mut::<4>(6).copy_from(&q);
    for k in 10..13 {
        x[k] = rng.gen_range(-0.1..0.1);
    }
    x
}

#[test]
fn circular_orbit_exponential_matches_closed_form() {
    let orbit = TargetOrbit::new(EARTH_MU, 6_778e3, 0.0, 0.4).unwrap();
    let n = orbit.mean_motion();
    let (a, _, _) = th_ltv(&orbit);
    let a = DMatrix::from_column_slice(6, 6, a.as_slice());
    for t in [1.0, 10.0, 100.0, 1000.0, 3000.0] {
        let phi = expm(&(&a * t)).unwrap();
        let cw = cw_transition(n, t);
        let cw = DMatrix::from_column_slice(6, 6, cw.as_slice());
        assert!(rel_err(&phi, &cw) < 1e-8, "t = {t}: {}", rel_err(&phi, &cw));
    }
}

#[test]
fn exponential_of_rotation_generator() {
    let w = 0.7;
    let m = DMatrix::from_row_slice(2, 2, &[0.0, -w, w, 0.0]);
    for t in [0.1, 1.0, 10.0, 50.0] {
        let e = expm(&(&m * t)).unwrap();
        let (s, c) = (w * t).sin_cos();
        let exact = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        assert!((e - exact).amax() < 1e-12);
    }
}

#[test]
fn analytic_jacobians_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = lopsided();
    let orbit = TargetOrbit::new(EARTH_MU, 7_500e3, 0.05, 1.1).unwrap();
    for _ in 0..100 {
        let x = random_state(&mut rng);
        let u = Vector6::from_fn(|_, _| rng.gen_range(-0.05..0.05));
        let lin = linearize(&x, &model, &orbit);
        let f = |z: &DVector<f64>| {
            let s = StateVector::from_column_slice(z.as_slice());
            let d = state_deriv(&s, &u, &model, &orbit);
            DVector::from_column_slice(d.as_slice())
        };
        let xd = DVector::from_column_slice(x.as_slice());
        let jx = central_jacobian(f, &xd, 1e-6);
        let a = DMatrix::from_column_slice(STATE_DIM, STATE_DIM, lin.a.as_slice());
        assert!((&jx - &a).amax() <= 1e-6 * a.amax(), "A: {}", (&jx - &a).amax());

        let g = |v: &DVector<f64>| {
            let d = state_deriv(&x, &Vector6::from_column_slice(v.as_slice()), &model, &orbit);
            DVector::from_column_slice(d.as_slice())
        };
        let ju = central_jacobian(g, &DVector::from_column_slice(u.as_slice()), 1e-4);
        let b = DMatrix::from_column_slice(STATE_DIM, 6, lin.b.as_slice());
        assert!((&ju - &b).amax() <= 1e-6 * b.amax(), "B: {}", (&ju - &b).amax());

        // the affine term reproduces the unforced derivative at x
        let f0 = state_deriv(&x, &Vector6::zeros(), &model, &orbit);
        assert!((lin.a * x + lin.c - f0).amax() <= 1e-12 * (1.0 + f0.amax()));
    }
}

#[test]
fn zero_order_hold_matches_integrated_transition() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = lopsided();
    let orbit = TargetOrbit::new(EARTH_MU, 7_000e3, 0.2, 2.0).unwrap();
    for _ in 0..10 {
        let x = random_state(&mut rng);
        let lin = linearize(&x, &model, &orbit);
        let a = DMatrix::from_column_slice(STATE_DIM, STATE_DIM, lin.a.as_slice());
        let b = DMatrix::from_column_slice(STATE_DIM, 6, lin.b.as_slice());
        for ts in [0.1, 1.0, 5.0] {
            let (ad, bd) = discretize(&a, &b, ts).unwrap();
            let (phi, gamma) = integrate_transition(&a, &b, ts, 2000);
            assert!((&ad - &phi).amax() < 1e-9, "Ad at ts {ts}");
            assert!((&bd - &gamma).amax() < 1e-9, "Bd at ts {ts}");
        }
    }
}

#[test]
fn torque_free_rotation_conserves_energy_and_momentum() {
    let model = lopsided();
    let orbit = TargetOrbit::new(EARTH_MU, 7_000e3, 0.0, 0.0).unwrap();
    let layout = Layout::new(0.5, FaceAngles::perpendicular()).unwrap();
    let alloc = layout.allocation(&(1..=24).collect::<Vec<_>>()).unwrap();
    let mut s = RelativeState::docked();
    s.w = Vector3::new(0.03, -0.02, 0.05);
    let energy = |w: &Vector3<f64>| 0.5 * w.dot(&(model.inertia * w));
    let e0 = energy(&s.w);
    let h0 = (model.inertia * s.w).norm();
    let zero = vec![0.0; 24];
    let mut o = orbit;
    for _ in 0..100 {
        s = nonlinear_step(&s, &zero, &alloc, &model, &o, 0.1).unwrap();
        o = o.propagate(0.1).unwrap();
    }
    assert!(((energy(&s.w) - e0) / e0).abs() < 1e-9);
    assert!((((model.inertia * s.w).norm() - h0) / h0).abs() < 1e-9);
    assert!((s.q.norm() - 1.0).abs() < 1e-12);
}

#[test]
fn unforced_relative_motion_follows_closed_form() {
    // eccentricity zero, small separation: truth propagation against the CW solution
    let orbit = TargetOrbit::new(EARTH_MU, 6_778e3, 0.0, 0.0).unwrap();
    let n = orbit.mean_motion();
    let model = InertiaModel::uniform_cube(4.0, 0.5).unwrap();
    let layout = Layout::new(0.5, FaceAngles::perpendicular()).unwrap();
    let alloc = layout.allocation(&(1..=24).collect::<Vec<_>>()).unwrap();
    let mut s = RelativeState::docked();
    s.r = Vector3::new(10.0, -3.0, 2.0);
    s.v = Vector3::new(-0.01, 0.02, 0.005);
    let x0 = Vector6::new(s.r.x, s.r.y, s.r.z, s.v.x, s.v.y, s.v.z);
    let zero = vec![0.0; 24];
    let mut o = orbit;
    let dt = 1.0;
    for _ in 0..600 {
        s = nonlinear_step(&s, &zero, &alloc, &model, &o, dt).unwrap();
        o = o.propagate(dt).unwrap();
    }
    let exact = cw_transition(n, 600.0) * x0;
    assert!((s.r - exact.fixed_rows::<3>(0)).norm() < 1e-8);
    assert!((s.v - exact.fixed_rows::<3>(3)).norm() < 1e-10);
}

proptest! {
    #[test]
    fn orbit_propagation_keeps_angular_momentum(a in 6.6e6f64..4e7, e in 0.0f64..0.7, th in 0.0f64..std::f64::consts::TAU, dt in 0.1f64..20.0) {
        let o = TargetOrbit::new(EARTH_MU, a, e, th).unwrap();
        let p = o.propagate(dt).unwrap();
        let r = p.radius();
        prop_assert!((r * r * p.theta_dot - o.h).abs() <= 1e-9 * o.h);
        prop_assert!(p.theta > o.theta);
    }

    #[test]
    fn quaternion_norm_is_preserved(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = lopsided();
        let orbit = TargetOrbit::new(EARTH_MU, 7_000e3, 0.1, 0.0).unwrap();
        let layout = Layout::new(0.5, FaceAngles::perpendicular()).unwrap();
        let alloc = layout.allocation(&[1, 5, 9, 13, 17, 21, 2, 6]).unwrap();
        let x = random_state(&mut rng);
        let f: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..0.05)).collect();
        let s = nonlinear_step(&RelativeState::from_vector(&x), &f, &alloc, &model, &orbit, 0.5).unwrap();
        prop_assert!((s.q.norm() - 1.0).abs() < 1e-12);
        prop_assert!(s.q[0] >= 0.0);
    }
}
