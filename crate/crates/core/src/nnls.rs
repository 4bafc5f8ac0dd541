//! Dense non-negative least squares, active-set (Lawson-Hanson).
//!
//! Minimizes `||A x - b||^2` subject to `x >= 0`. The passive set grows by the
//! column with the largest dual value `A^T (b - A x)`; the lowest index wins
//! exact ties. The passive set is kept in ascending column order so every
//! solve performs the same arithmetic in the same order.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub x: Vec<f64>,
    pub residual_norm_sq: f64,
    pub iterations: usize,
}

/// Solves one NNLS problem. `tol` is relative to `||A^T b||_inf`.
pub fn nnls_solve(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Result<NnlsSolution> {
    let (m, n) = a.shape();
    if b.len() != m {
        return Err(Error::domain(format!("rhs has {} rows, matrix {m}", b.len())));
    }
    // DMatrix storage is column-major already.
    NnlsWorkspace::new().solve(a.as_slice(), m, n, b.as_slice(), tol)
}

/// Reusable scratch space; one per thread when solving many small problems.
#[derive(Debug, Default, Clone)]
pub struct NnlsWorkspace {
    passive: Vec<usize>,
    blocked: Vec<bool>,
    in_passive: Vec<bool>,
    dual: Vec<f64>,
    residual: Vec<f64>,
    qr: Vec<f64>,
    rhs: Vec<f64>,
    z: Vec<f64>,
}

impl NnlsWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// `a` is column-major `m x n`.
    pub fn solve(&mut self, a: &[f64], m: usize, n: usize, b: &[f64], tol: f64) -> Result<NnlsSolution> {
        if m == 0 || n == 0 {
            return Err(Error::domain("nnls needs at least one row and one column"));
        }
        if a.len() != m * n || b.len() != m {
            return Err(Error::domain("nnls dimensions do not match"));
        }
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::domain(format!("nnls tolerance {tol} must be positive")));
        }
        if a.iter().chain(b).any(|v| !v.is_finite()) {
            return Err(Error::domain("nnls input contains non-finite entries"));
        }

        let col = |j: usize| &a[j * m..(j + 1) * m];
        let scale = {
            let s = (0..n).map(|j| dot(col(j), b).abs()).fold(0.0, f64::max);
            if s > 0.0 {
                s
            } else {
                1.0
            }
        };
        let threshold = tol * scale;
        let cap = 3 * n;

        self.passive.clear();
        self.in_passive.clear();
        self.in_passive.resize(n, false);
        self.blocked.clear();
        self.blocked.resize(n, false);
        self.dual.resize(n, 0.0);
        self.residual.clear();
        self.residual.extend_from_slice(b);

        let mut x = vec![0.0; n];
        let mut iterations = 0;

        loop {
            for j in 0..n {
                self.dual[j] = dot(col(j), &self.residual);
            }
            // First maximal dual among free columns.
            let mut enter = None;
            let mut best = threshold;
            for j in 0..n {
                if !self.in_passive[j] && !self.blocked[j] && self.dual[j] > best {
                    best = self.dual[j];
                    enter = Some(j);
                }
            }
            let Some(j) = enter else { break };

            iterations += 1;
            if iterations > cap {
                return Err(Error::Convergence {
                    routine: "nnls",
                    iterations,
                    best: Some(x),
                });
            }

            self.insert_passive(j);
            let ok = self.solve_passive(a, m, b);
            let z_enter = self.z_of(j);
            if !ok || z_enter <= 0.0 {
                // Column is numerically dependent on the passive set or does
                // not move the solution; skip it until the iterate changes.
                self.remove_passive(j);
                self.blocked[j] = true;
                continue;
            }

            // Inner loop: step back toward feasibility while any passive
            // coordinate of the unconstrained solution is non-positive.
            loop {
                if self.z.iter().all(|&zi| zi > 0.0) {
                    break;
                }
                iterations += 1;
                if iterations > cap {
                    return Err(Error::Convergence {
                        routine: "nnls",
                        iterations,
                        best: Some(x),
                    });
                }
                let mut alpha = f64::INFINITY;
                let mut limiting = self.passive[0];
                for (&p, &zp) in self.passive.iter().zip(&self.z) {
                    if zp <= 0.0 {
                        let step = x[p] / (x[p] - zp);
                        if step < alpha {
                            alpha = step;
                            limiting = p;
                        }
                    }
                }
                for (&p, &zp) in self.passive.iter().zip(&self.z) {
                    x[p] += alpha * (zp - x[p]);
                }
                x[limiting] = 0.0;
                let drop: Vec<usize> = self
                    .passive
                    .iter()
                    .copied()
                    .filter(|&p| x[p] <= 1e-15 * scale)
                    .collect();
                for p in drop {
                    x[p] = 0.0;
                    self.remove_passive(p);
                }
                if self.passive.is_empty() {
                    self.z.clear();
                    break;
                }
                if !self.solve_passive(a, m, b) {
                    return Err(Error::Numeric("nnls passive set became singular".into()));
                }
            }

            x.iter_mut().for_each(|v| *v = 0.0);
            for (&p, &zp) in self.passive.iter().zip(&self.z) {
                x[p] = zp;
            }
            self.blocked.iter_mut().for_each(|f| *f = false);

            self.residual.copy_from_slice(b);
            for &p in &self.passive {
                axpy(-x[p], col(p), &mut self.residual);
            }
        }

        let mut r = b.to_vec();
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                axpy(-xj, col(j), &mut r);
            }
        }
        Ok(NnlsSolution {
            residual_norm_sq: dot(&r, &r),
            x,
            iterations,
        })
    }

    fn insert_passive(&mut self, j: usize) {
        let pos = self.passive.partition_point(|&p| p < j);
        self.passive.insert(pos, j);
        self.in_passive[j] = true;
    }

    fn remove_passive(&mut self, j: usize) {
        if let Some(pos) = self.passive.iter().position(|&p| p == j) {
            self.passive.remove(pos);
        }
        self.in_passive[j] = false;
    }

    fn z_of(&self, j: usize) -> f64 {
        self.passive
            .iter()
            .position(|&p| p == j)
            .map(|k| self.z[k])
            .unwrap_or(0.0)
    }

    /// Unconstrained least squares on the passive columns via Householder QR.
    /// Returns false when the passive columns are numerically dependent.
    fn solve_passive(&mut self, a: &[f64], m: usize, b: &[f64]) -> bool {
        let k = self.passive.len();
        self.z.clear();
        self.z.resize(k, 0.0);
        if k > m {
            return false;
        }
        self.qr.clear();
        for &p in &self.passive {
            self.qr.extend_from_slice(&a[p * m..(p + 1) * m]);
        }
        self.rhs.clear();
        self.rhs.extend_from_slice(b);

        let qr = &mut self.qr;
        let rhs = &mut self.rhs;
        for c in 0..k {
            let col_norm = {
                let cslice = &qr[c * m..(c + 1) * m];
                dot(cslice, cslice).sqrt()
            };
            let tail_norm = {
                let cslice = &qr[c * m + c..(c + 1) * m];
                dot(cslice, cslice).sqrt()
            };
            if tail_norm <= 1e-12 * col_norm.max(f64::MIN_POSITIVE) || tail_norm == 0.0 {
                return false;
            }
            let head = qr[c * m + c];
            let alpha = if head > 0.0 { -tail_norm } else { tail_norm };
            // v = x - alpha e1, stored in place of the column tail
            qr[c * m + c] = head - alpha;
            let vnorm_sq = {
                let v = &qr[c * m + c..(c + 1) * m];
                dot(v, v)
            };
            // apply to remaining columns
            for c2 in (c + 1)..k {
                let (left, right) = qr.split_at_mut(c2 * m);
                let v = &left[c * m + c..(c + 1) * m];
                let target = &mut right[c..m];
                let s = 2.0 * dot(v, target) / vnorm_sq;
                axpy(-s, v, target);
            }
            {
                let v = &qr[c * m + c..(c + 1) * m];
                let target = &mut rhs[c..m];
                let s = 2.0 * dot(v, target) / vnorm_sq;
                axpy(-s, v, target);
            }
            qr[c * m + c] = alpha;
        }
        // back substitution on R z = Q^T b
        for c in (0..k).rev() {
            let mut acc = rhs[c];
            for c2 in (c + 1)..k {
                acc -= qr[c2 * m + c] * self.z[c2];
            }
            self.z[c] = acc / qr[c * m + c];
        }
        true
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}
