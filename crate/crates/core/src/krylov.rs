//! Matrix-free iterative solvers on plain vectors: projected conjugate
//! gradients, restarted GMRES and a single-vector LOBPCG.

use crate::dense::Matrix;
use crate::error::{Error, Result};
use crate::grid::dot;

#[derive(Clone, Copy, Debug, Default)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final relative residual.
    pub residual: f64,
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Orthogonal projector onto the complement of a set of vectors.
#[derive(Clone, Debug, Default)]
pub struct Projector {
    basis: Vec<Vec<f64>>,
}

impl Projector {
    /// Orthonormalizes `vectors` (twice-iterated Gram-Schmidt), dropping
    /// numerically dependent ones.
    pub fn new(vectors: &[Vec<f64>]) -> Self {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for v in vectors {
            let mut w = v.clone();
            let n0 = norm(&w);
            if n0 == 0.0 {
                continue;
            }
            for _ in 0..2 {
                for b in &basis {
                    let c = dot(&w, b);
                    axpy(&mut w, -c, b);
                }
            }
            let n1 = norm(&w);
            if n1 > 1e-10 * n0 {
                w.iter_mut().for_each(|x| *x /= n1);
                basis.push(w);
            }
        }
        Self { basis }
    }

    pub fn apply(&self, v: &mut [f64]) {
        for b in &self.basis {
            let c = dot(v, b);
            axpy(v, -c, b);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }
}

/// Preconditioned conjugate gradients for an SPD operator on the range of `proj`.
pub fn pcg(
    a: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    proj: &Projector,
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let mut rhs = b.to_vec();
    proj.apply(&mut rhs);
    let bnorm = norm(&rhs);
    let mut x = vec![0.0; b.len()];
    if bnorm == 0.0 {
        return Ok((x, SolveStats::default()));
    }
    let mut r = rhs;
    let mut z = precond(&r);
    proj.apply(&mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let mut ap = a(&p);
        proj.apply(&mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver(format!(
                "conjugate gradients met a non-positive direction ({pap:e})"
            )));
        }
        let alpha = rz / pap;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        let res = norm(&r) / bnorm;
        if res <= tol {
            return Ok((
                x,
                SolveStats {
                    iterations: it,
                    residual: res,
                },
            ));
        }
        z = precond(&r);
        proj.apply(&mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(Error::Solver(format!(
        "conjugate gradients: no convergence in {max_iter} iterations"
    )))
}

/// Right-preconditioned restarted GMRES for `A x = b`.
pub fn gmres(
    a: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveStats)> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, SolveStats::default()));
    }
    let mut total = 0;
    loop {
        let ax = a(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm(&r);
        if beta / bnorm <= tol {
            return Ok((
                x,
                SolveStats {
                    iterations: total,
                    residual: beta / bnorm,
                },
            ));
        }
        if total >= max_iter {
            return Err(Error::Solver(format!(
                "GMRES: no convergence in {max_iter} iterations (residual {:e})",
                beta / bnorm
            )));
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut zs: Vec<Vec<f64>> = Vec::new();
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..restart {
            total += 1;
            let z = precond(&v[k]);
            let mut w = a(&z);
            zs.push(z);
            for i in 0..=k {
                h[i][k] = dot(&w, &v[i]);
                axpy(&mut w, -h[i][k], &v[i]);
            }
            for i in 0..=k {
                let c = dot(&w, &v[i]);
                h[i][k] += c;
                axpy(&mut w, -c, &v[i]);
            }
            h[k + 1][k] = norm(&w);
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let d = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            cs[k] = h[k][k] / d;
            sn[k] = h[k + 1][k] / d;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            let nv = norm(&w);
            if g[k + 1].abs() / bnorm <= tol || total >= max_iter || nv == 0.0 {
                break;
            }
            v.push(w.iter().map(|x| x / nv).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let s: f64 = (i + 1..k_used).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (yi, z) in y.iter().zip(&zs) {
            axpy(&mut x, *yi, z);
        }
    }
}

/// Result of a constrained Rayleigh-quotient minimization.
#[derive(Clone, Debug)]
pub struct EigenResult {
    pub value: f64,
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// Relative residual `|P(Ax - rho Bx)| / |Bx|`.
    pub residual: f64,
}

/// Smallest value of `x.Ax / x.Bx` over the range of `proj`, by locally
/// optimal preconditioned iteration (`A` symmetric, `B` SPD).
#[allow(clippy::too_many_arguments)]
pub fn lobpcg_min(
    a: impl Fn(&[f64]) -> Vec<f64>,
    b: impl Fn(&[f64]) -> Vec<f64>,
    precond: impl Fn(&[f64]) -> Vec<f64>,
    proj: &Projector,
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<EigenResult> {
    let bnorm = |v: &[f64]| dot(v, &b(v)).sqrt();
    let mut x = x0.to_vec();
    proj.apply(&mut x);
    let nx = bnorm(&x);
    if nx == 0.0 {
        return Err(Error::Usage("start vector lies in the constraint span".into()));
    }
    x.iter_mut().for_each(|v| *v /= nx);
    let mut p: Option<Vec<f64>> = None;
    let mut best = EigenResult {
        value: f64::INFINITY,
        vector: x.clone(),
        iterations: 0,
        residual: f64::INFINITY,
    };
    let mut stall = 0;
    for it in 1..=max_iter {
        let ax = a(&x);
        let bx = b(&x);
        let rho = dot(&x, &ax) / dot(&x, &bx);
        let mut r: Vec<f64> = ax.iter().zip(&bx).map(|(u, v)| u - rho * v).collect();
        proj.apply(&mut r);
        let res = norm(&r) / norm(&bx);
        if rho < best.value - 1e-15 * rho.abs().max(1.0) {
            stall = 0;
        } else {
            stall += 1;
        }
        best = EigenResult {
            value: rho,
            vector: x.clone(),
            iterations: it,
            residual: res,
        };
        if res <= tol || stall > 30 {
            return Ok(best);
        }
        let mut w = precond(&r);
        proj.apply(&mut w);
        let mut raw = vec![x.clone(), w];
        if let Some(pp) = &p {
            raw.push(pp.clone());
        }
        // B-orthonormal basis, dropping dependent directions.
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut bbasis: Vec<Vec<f64>> = Vec::new();
        let mut kept = Vec::new();
        for (idx, v) in raw.into_iter().enumerate() {
            let mut u = v;
            let n0 = bnorm(&u);
            if !(n0 > 0.0) {
                continue;
            }
            for _ in 0..2 {
                for (q, bq) in basis.iter().zip(&bbasis) {
                    let c = dot(&u, bq);
                    axpy(&mut u, -c, q);
                }
            }
            let bu = b(&u);
            let n1 = dot(&u, &bu).sqrt();
            if n1 > 1e-8 * n0 {
                u.iter_mut().for_each(|v| *v /= n1);
                basis.push(u);
                bbasis.push(bu.iter().map(|v| v / n1).collect());
                kept.push(idx);
            }
        }
        let m = basis.len();
        let abasis: Vec<Vec<f64>> = basis.iter().map(|v| a(v)).collect();
        let mut g = Matrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                g[(i, j)] = 0.5 * (dot(&basis[i], &abasis[j]) + dot(&basis[j], &abasis[i]));
            }
        }
        let (_, vecs) = g.symmetric_eigen();
        let c: Vec<f64> = (0..m).map(|i| vecs[(i, 0)]).collect();
        let mut xn = vec![0.0; x.len()];
        let mut pn = vec![0.0; x.len()];
        for i in 0..m {
            axpy(&mut xn, c[i], &basis[i]);
            if i > 0 {
                axpy(&mut pn, c[i], &basis[i]);
            }
        }
        proj.apply(&mut xn);
        let nn = bnorm(&xn);
        xn.iter_mut().for_each(|v| *v /= nn);
        x = xn;
        p = if m > 1 { Some(pn) } else { None };
    }
    Ok(best)
}
