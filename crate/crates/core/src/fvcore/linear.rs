//! Jacobi-preconditioned BiCGSTAB and CG.

use sprs::CsMat;

use crate::error::{Error, Result};

/// Linear operator with a diagonal used for Jacobi preconditioning.
pub trait Operator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn diagonal(&self) -> Vec<f64>;
}

impl Operator for CsMat<f64> {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (r, row) in self.outer_iterator().enumerate() {
            let mut s = 0.0;
            for (c, &v) in row.iter() {
                s += v * x[c];
            }
            y[r] = s;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.rows()];
        for (r, row) in self.outer_iterator().enumerate() {
            if let Some(&v) = row.get(r) {
                d[r] = v;
            }
        }
        d
    }
}

/// Matrix plus a rank-one term `u v^T`.
pub struct RankOneUpdated<'a> {
    pub matrix: &'a CsMat<f64>,
    pub u: &'a [f64],
    pub v: &'a [f64],
}

impl Operator for RankOneUpdated<'_> {
    fn dim(&self) -> usize {
        self.matrix.rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matrix.apply(x, y);
        let s = dot(self.v, x);
        for (yi, ui) in y.iter_mut().zip(self.u) {
            *yi += ui * s;
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let mut d = self.matrix.diagonal();
        for (k, dk) in d.iter_mut().enumerate() {
            *dk += self.u[k] * self.v[k];
        }
        d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovReport {
    pub iterations: usize,
    pub residual: f64,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn inverse_diagonal(op: &dyn Operator) -> Vec<f64> {
    op.diagonal()
        .into_iter()
        .map(|d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect()
}

/// Solves `op x = b` in place; `tol` is the relative residual `|b - A x| / |b|`.
pub fn bicgstab(
    op: &dyn Operator,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<KrylovReport> {
    let n = op.dim();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovReport {
            iterations: 0,
            residual: 0.0,
        });
    }
    let dinv = inverse_diagonal(op);
    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    for k in 0..n {
        r[k] = b[k] - r[k];
    }
    let mut res = norm(&r) / bnorm;
    if res <= tol {
        return Ok(KrylovReport {
            iterations: 0,
            residual: res,
        });
    }
    let mut r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut restarts = 0;
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 || omega == 0.0 {
            // Breakdown: restart from the current iterate.
            restarts += 1;
            if restarts > 20 {
                break;
            }
            op.apply(x, &mut r);
            for k in 0..n {
                r[k] = b[k] - r[k];
            }
            r_hat.copy_from_slice(&r);
            p.iter_mut().for_each(|q| *q = 0.0);
            v.iter_mut().for_each(|q| *q = 0.0);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for k in 0..n {
            p[k] = r[k] + beta * (p[k] - omega * v[k]);
            y[k] = dinv[k] * p[k];
        }
        op.apply(&y, &mut v);
        let rv = dot(&r_hat, &v);
        if rv == 0.0 {
            omega = 0.0;
            continue;
        }
        alpha = rho / rv;
        for k in 0..n {
            s[k] = r[k] - alpha * v[k];
        }
        if norm(&s) / bnorm <= tol {
            for k in 0..n {
                x[k] += alpha * y[k];
            }
            r.copy_from_slice(&s);
            res = norm(&r) / bnorm;
            if res <= tol {
                return Ok(KrylovReport {
                    iterations: it,
                    residual: res,
                });
            }
            continue;
        }
        for k in 0..n {
            z[k] = dinv[k] * s[k];
        }
        op.apply(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for k in 0..n {
            x[k] += alpha * y[k] + omega * z[k];
            r[k] = s[k] - omega * t[k];
        }
        res = norm(&r) / bnorm;
        if res <= tol {
            // Guard against drift of the recursive residual.
            op.apply(x, &mut t);
            let mut true_res = 0.0;
            for k in 0..n {
                let d = b[k] - t[k];
                true_res += d * d;
            }
            let true_res = true_res.sqrt() / bnorm;
            if true_res <= tol {
                return Ok(KrylovReport {
                    iterations: it,
                    residual: true_res,
                });
            }
            for k in 0..n {
                r[k] = b[k] - t[k];
            }
            r_hat.copy_from_slice(&r);
            rho = 1.0;
            alpha = 1.0;
            omega = 1.0;
            p.iter_mut().for_each(|q| *q = 0.0);
            v.iter_mut().for_each(|q| *q = 0.0);
            res = true_res;
        }
    }
    Err(Error::LinearSolver {
        iterations: it,
        residual: res,
    })
}

/// Jacobi-preconditioned conjugate gradients for symmetric positive (semi)definite operators.
pub fn conjugate_gradient(
    op: &dyn Operator,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<KrylovReport> {
    let n = op.dim();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(KrylovReport {
            iterations: 0,
            residual: 0.0,
        });
    }
    let dinv = inverse_diagonal(op);
    let mut r = vec![0.0; n];
    op.apply(x, &mut r);
    for k in 0..n {
        r[k] = b[k] - r[k];
    }
    let mut z: Vec<f64> = r.iter().zip(&dinv).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut res = norm(&r) / bnorm;
    let mut it = 0;
    while res > tol && it < max_iter {
        it += 1;
        op.apply(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            break;
        }
        let alpha = rz / pq;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * q[k];
        }
        res = norm(&r) / bnorm;
        for k in 0..n {
            z[k] = dinv[k] * r[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    if res <= tol {
        Ok(KrylovReport {
            iterations: it,
            residual: res,
        })
    } else {
        Err(Error::LinearSolver {
            iterations: it,
            residual: res,
        })
    }
}
