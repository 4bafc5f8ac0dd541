mod common;

use common::{box_qp_by_enumeration, random_matrix};
use cubethrust::dynamics::{quat_from_axis_angle, InertiaModel, RelativeState, StateVector, TargetOrbit, EARTH_MU};
use cubethrust::geometry::{FaceAngles, Layout};
use cubethrust::mpc::{
    assemble_qp, build_prediction, solve_qp, MpcProblem, MpcWeights, QpSettings, ReferenceMode, ReferencePath,
};
use nalgebra::{DMatrix, DVector, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TIGHT: QpSettings = QpSettings {
    max_iterations: 200_000,
    tolerance: 1e-11,
};

fn random_problem(rng: &mut ChaCha8Rng) -> MpcProblem {
    let n = rng.gen_range(1..=6);
    let m = random_matrix(rng, n + 2, n);
    let hessian = m.transpose() * &m + DMatrix::identity(n, n) * 0.05;
    let gradient = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
    MpcProblem {
        horizon: 1,
        n_thrusters: n,
        hessian,
        gradient,
        constant: 0.0,
        lower: 0.0,
        upper: rng.gen_range(0.1..1.0),
    }
}

#[test]
fn box_qp_matches_active_set_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..200 {
        let p = random_problem(&mut rng);
        let sol = solve_qp(&p, None, &TIGHT);
        let exact = box_qp_by_enumeration(&p.hessian, &p.gradient, p.lower, p.upper);
        assert!(sol.converged);
        assert!((sol.objective - exact).abs() <= 1e-8 * (1.0 + exact.abs()), "{} vs {exact}", sol.objective);
        assert!(sol.f.iter().all(|&f| (p.lower..=p.upper).contains(&f)));
    }
}

#[test]
fn warm_start_reaches_the_same_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let p = random_problem(&mut rng);
        let cold = solve_qp(&p, None, &TIGHT);
        let warm: Vec<f64> = (0..p.n_vars()).map(|_| rng.gen_range(-1.0..2.0)).collect();
        let hot = solve_qp(&p, Some(&warm), &TIGHT);
        assert!((cold.objective - hot.objective).abs() <= 1e-9 * (1.0 + cold.objective.abs()));
    }
}

struct Setup {
    x0: StateVector,
    reference: Vec<StateVector>,
    weights: MpcWeights,
    prev: Vec<f64>,
    pred: cubethrust::mpc::Prediction,
}

fn setup(rng: &mut ChaCha8Rng, ids: &[usize], horizon: usize) -> Setup {
    let layout = Layout::new(0.5, FaceAngles::perpendicular()).unwrap();
    let alloc = layout.allocation(ids).unwrap();
    let inertia = InertiaModel::uniform_cube(4.0, 0.5).unwrap();
    let orbit = TargetOrbit::new(EARTH_MU, 7_000e3, 0.1, 0.5).unwrap();
    let mut s = RelativeState::docked();
    s.r = Vector3::from_fn(|_, _| rng.gen_range(-5.0..5.0));
    s.v = Vector3::from_fn(|_, _| rng.gen_range(-0.05..0.05));
    s.q = quat_from_axis_angle(&Vector3::new(1.0, -2.0, 0.5), rng.gen_range(0.0..1.0)).unwrap();
    s.w = Vector3::from_fn(|_, _| rng.gen_range(-0.02..0.02));
    let pred = build_prediction(&s, &orbit, &alloc, &inertia, 0.1, horizon).unwrap();
    let reference = (0..=horizon)
        .map(|j| {
            let mut r = RelativeState::docked();
            r.r = Vector3::new(2.0 - 0.01 * j as f64, 0.0, 0.0);
            r.q = Vector4::new(1.0, 0.01 * j as f64, 0.0, 0.0).normalize();
            r.to_vector()
        })
        .collect();
    let mut weights = if rng.gen_bool(0.5) { MpcWeights::phase1() } else { MpcWeights::phase2() };
    weights.rho = rng.gen_range(0.0..2e3);
    let prev = (0..ids.len()).map(|_| rng.gen_range(0.0..0.05)).collect();
    Setup {
        x0: s.to_vector(),
        reference,
        weights,
        prev,
        pred,
    }
}

/// Cost of a thrust sequence computed directly from the simulated states.
fn rollout_cost(s: &Setup, f: &[f64]) -> f64 {
    let xs = s.pred.rollout(&s.x0, f);
    let horizon = s.pred.horizon();
    let n = s.pred.n_thrusters();
    let mut j = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let w = if i == horizon { &s.weights.p } else { &s.weights.q };
        let e = x - s.reference[i];
        j += e.iter().zip(w).map(|(e, w)| w * e * e).sum::<f64>();
    }
    let q0: Vector4<f64> = s.x0.fixed_rows::<4>(6).into_owned();
    let qn: Vector4<f64> = xs[horizon].fixed_rows::<4>(6).into_owned();
    // |q|^2 - 1 linearized about q0
    let phi = 2.0 * q0.dot(&qn) - q0.norm_squared() - 1.0;
    j += s.weights.rho * phi * phi;
    for i in 0..horizon {
        let fi = &f[i * n..(i + 1) * n];
        let prev = if i == 0 { &s.prev[..] } else { &f[(i - 1) * n..i * n] };
        j += s.weights.r * fi.iter().map(|v| v * v).sum::<f64>();
        j += s.weights.r_df * fi.iter().zip(prev).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    j
}

#[test]
fn condensed_objective_equals_rollout_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let ids: Vec<usize> = vec![1, 3, 6, 8, 9, 12, 14, 15, 18, 20, 21, 23];
    for _ in 0..20 {
        let horizon = rng.gen_range(1..=10);
        let s = setup(&mut rng, &ids, horizon);
        let qp = assemble_qp(&s.pred, &s.x0, &s.reference, &s.weights, &s.prev, (0.0, 0.05)).unwrap();
        for _ in 0..5 {
            let f: Vec<f64> = (0..qp.n_vars()).map(|_| rng.gen_range(0.0..0.05)).collect();
            let direct = rollout_cost(&s, &f);
            assert!((qp.objective(&f) - direct).abs() <= 1e-9 * direct.abs().max(1.0), "{} vs {direct}", qp.objective(&f));
        }
    }
}

#[test]
fn assembled_problem_solves_to_enumerated_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10 {
        let s = setup(&mut rng, &[1, 6, 11, 16], 2);
        let qp = assemble_qp(&s.pred, &s.x0, &s.reference, &s.weights, &s.prev, (0.0, 0.05)).unwrap();
        let sol = solve_qp(&qp, None, &TIGHT);
        let exact = box_qp_by_enumeration(&qp.hessian, &qp.gradient, 0.0, 0.05) + qp.constant;
        assert!((sol.objective - exact).abs() <= 1e-7 * exact.abs().max(1.0), "{} vs {exact}", sol.objective);
    }
}

#[test]
fn profiled_path_is_kinematically_consistent() {
    let mode = ReferenceMode::default();
    let ReferenceMode::Profiled { max_speed, max_rate, .. } = mode else { unreachable!() };
    let ts = 0.1;
    let start = Vector3::new(10.0, 0.0, 0.0);
    let goal = Vector3::new(2.0, 0.0, 0.0);
    let q0 = quat_from_axis_angle(&Vector3::new(1.0, 2.0, 3.0), 1.2).unwrap();
    let path = ReferencePath::new(start, goal, &q0, mode, ts);
    assert!(!path.is_empty());
    assert_eq!(path.sample(0).r, start);
    for j in 0..path.len() {
        let (a, b) = (path.sample(j), path.sample(j + 1));
        assert!(a.v.norm() <= max_speed + 1e-15);
        assert!(a.w.norm() <= max_rate + 1e-15);
        assert!((b.r - a.r - a.v * ts).norm() < 1e-12 || b.r == goal);
        let drop = a.attitude_error() - b.attitude_error();
        assert!(drop >= -1e-12);
        if b.w.norm() > 0.0 {
            assert!((drop - a.w.norm() * ts).abs() < 1e-9);
        }
        assert!((a.q.norm() - 1.0).abs() < 1e-12);
    }
    let end = path.sample(path.len() + 5);
    assert_eq!(end.r, goal);
    assert_eq!(end.v, Vector3::zeros());
    assert!((end.r - goal).norm() < 1e-5);
}

#[test]
fn fixed_mode_holds_the_goal() {
    let goal = Vector3::new(2.0, 0.0, 0.0);
    let path = ReferencePath::new(Vector3::new(10.0, 1.0, 0.0), goal, &Vector4::new(0.0, 1.0, 0.0, 0.0), ReferenceMode::Fixed, 0.1);
    assert!(path.is_empty());
    let s = path.sample(3);
    assert_eq!(s.r, goal);
    assert_eq!(s.q, RelativeState::docked().q);
}
