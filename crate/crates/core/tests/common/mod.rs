//! Independent oracles shared by the integration tests. Nothing here calls
//! the routine it is used to check.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Exact NNLS optimum by enumerating every support set and keeping the best
/// non-negative least-squares solution. Returns the squared residual.
pub fn nnls_by_enumeration(a: &DMatrix<f64>, b: &DVector<f64>) -> f64 {
    let (m, n) = a.shape();
    assert!(n <= 16);
    let mut best = b.norm_squared();
    for mask in 1u32..(1 << n) {
        let cols: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        if cols.len() > m {
            continue;
        }
        let sub = DMatrix::from_fn(m, cols.len(), |i, k| a[(i, cols[k])]);
        let svd = sub.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if svd.singular_values.iter().any(|&s| s <= smax * 1e-12) {
            continue;
        }
        let x = svd.solve(b, 0.0).expect("svd has both factors");
        if x.iter().any(|&v| v < 0.0) {
            continue;
        }
        let r = (b - &sub * x).norm_squared();
        if r < best {
            best = r;
        }
    }
    best
}

pub fn random_matrix(rng: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Closed-form state transition of the Clohessy-Wiltshire equations with
/// x radial, y along-track, z normal to the orbit.
pub fn cw_transition(n: f64, t: f64) -> Matrix6<f64> {
    let (s, c) = (n * t).sin_cos();
    #[rustfmt::skip]
    let m = Matrix6::from_row_slice(&[
        4.0 - 3.0 * c,          0.0, 0.0,  s / n,               2.0 * (1.0 - c) / n,       0.0,
        6.0 * (s - n * t),      1.0, 0.0, -2.0 * (1.0 - c) / n, (4.0 * s - 3.0 * n * t) / n, 0.0,
        0.0,                    0.0, c,    0.0,                 0.0,                       s / n,
        3.0 * n * s,            0.0, 0.0,  c,                   2.0 * s,                   0.0,
        -6.0 * n * (1.0 - c),   0.0, 0.0, -2.0 * s,             4.0 * c - 3.0,             0.0,
        0.0,                    0.0, -n * s, 0.0,               0.0,                       c,
    ]);
    m
}

/// Integrates `Phi' = A Phi`, `Gamma' = A Gamma + B` from zero to `ts` with
/// classical RK4 on `steps` sub-steps.
pub fn integrate_transition(a: &DMatrix<f64>, b: &DMatrix<f64>, ts: f64, steps: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let m = b.ncols();
    let rhs = |y: &DMatrix<f64>| -> DMatrix<f64> {
        let mut d = a * y;
        let mut g = d.columns_mut(n, m);
        g += b;
        d
    };
    let mut y = DMatrix::<f64>::zeros(n, n + m);
    y.view_mut((0, 0), (n, n)).fill_with_identity();
    let h = ts / steps as f64;
    for _ in 0..steps {
        let k1 = rhs(&y);
        let k2 = rhs(&(&y + &k1 * (0.5 * h)));
        let k3 = rhs(&(&y + &k2 * (0.5 * h)));
        let k4 = rhs(&(&y + &k3 * h));
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    (y.columns(0, n).into_owned(), y.columns(n, m).into_owned())
}

/// Central-difference Jacobian of `f` at `x`.
pub fn central_jacobian<F>(f: F, x: &DVector<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let m = f(x).len();
    let mut j = DMatrix::zeros(m, x.len());
    for k in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let d = (f(&xp) - f(&xm)) / (2.0 * h);
        j.set_column(k, &d);
    }
    j
}

/// Minimum box-QP objective `0.5 x'Hx + g'x` over `lo <= x <= hi` by trying
/// every assignment of each variable to lower, upper or free.
pub fn box_qp_by_enumeration(h: &DMatrix<f64>, g: &DVector<f64>, lo: f64, hi: f64) -> f64 {
    let n = g.len();
    assert!(n <= 8);
    let obj = |x: &DVector<f64>| 0.5 * x.dot(&(h * x)) + g.dot(x);
    let mut best = f64::INFINITY;
    let mut state = vec![0u8; n];
    loop {
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 2).collect();
        let mut x = DVector::from_fn(n, |i, _| match state[i] {
            0 => lo,
            1 => hi,
            _ => 0.0,
        });
        let mut ok = true;
        if !free.is_empty() {
            let hff = DMatrix::from_fn(free.len(), free.len(), |r, c| h[(free[r], free[c])]);
            let mut rhs = DVector::from_fn(free.len(), |r, _| -g[free[r]]);
            for j in (0..n).filter(|j| state[*j] != 2) {
                for (r, &i) in free.iter().enumerate() {
                    rhs[r] -= h[(i, j)] * x[j];
                }
            }
            match hff.lu().solve(&rhs) {
                Some(sol) => {
                    for (r, &i) in free.iter().enumerate() {
                        x[i] = sol[r];
                        if sol[r] < lo - 1e-12 || sol[r] > hi + 1e-12 {
                            ok = false;
                        }
                    }
                }
                None => ok = false,
            }
        }
        if ok {
            best = best.min(obj(&x));
        }
        // next assignment in base 3
        let mut k = 0;
        while k < n && state[k] == 2 {
            state[k] = 0;
            k += 1;
        }
        if k == n {
            break;
        }
        state[k] += 1;
    }
    best
}

/// Lower bound on the summed thrust needed for each of the twelve unit
/// wrenches: `e.(H f) = 1` with `f >= 0` needs `sum f >= 1 / max_i e.h_i`.
pub fn unit_command_floor(columns: &[Vector6<f64>]) -> f64 {
    let mut total = 0.0;
    for k in 0..6 {
        for sign in [1.0, -1.0] {
            let best = columns.iter().map(|c| sign * c[k]).fold(f64::NEG_INFINITY, f64::max);
            assert!(best > 0.0, "direction {k} sign {sign} unreachable");
            total += 1.0 / best;
        }
    }
    total
}

/// `C(n, k)` by Pascal's triangle.
pub fn pascal(n: usize, k: usize) -> u64 {
    let mut row = vec![1u64];
    for _ in 0..n {
        let mut next = vec![1u64; row.len() + 1];
        for j in 1..row.len() {
            next[j] = row[j - 1] + row[j];
        }
        row = next;
    }
    row.get(k).copied().unwrap_or(0)
}
