//! Linear solvers for the implicit stepping matrices.

use super::operator::Csr;
use crate::error::{Error, Result};

const KRYLOV_TOL: f64 = 1e-13;
const KRYLOV_MAX_ITER: usize = 2000;

/// A factorable system: tridiagonal (Thomas) when possible, otherwise Jacobi-preconditioned BiCGSTAB.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    matrix: Csr,
    bands: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
}

impl LinearSystem {
    pub fn new(matrix: Csr) -> Self {
        let bands = matrix.tridiagonal();
        Self { matrix, bands }
    }

    pub fn matrix(&self) -> &Csr {
        &self.matrix
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        match &self.bands {
            Some((lower, diag, upper)) => thomas(lower, diag, upper, rhs),
            None => bicgstab(&self.matrix, rhs),
        }
    }
}

/// Thomas algorithm for `lower[i] x[i-1] + diag[i] x[i] + upper[i] x[i+1] = rhs[i]`.
pub fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(Error::Singular("zero pivot in tridiagonal solve".into()));
    }
    c[0] = upper[0] / denom;
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i] * c[i - 1];
        if denom == 0.0 {
            return Err(Error::Singular("zero pivot in tridiagonal solve".into()));
        }
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned BiCGSTAB.
pub fn bicgstab(a: &Csr, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = a.n;
    let inv_diag: Vec<f64> = a.diag().iter().map(|d| if *d != 0.0 { 1.0 / d } else { 1.0 }).collect();
    let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(&inv_diag).map(|(x, d)| x * d).collect() };
    let rhs_norm = dot(rhs, rhs).sqrt();
    if rhs_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = precond(rhs);
    let ax = a.matvec(&x);
    let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, v)| b - v).collect();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut residual = dot(&r, &r).sqrt() / rhs_norm;
    for _ in 0..KRYLOV_MAX_ITER {
        if residual < KRYLOV_TOL {
            return Ok(x);
        }
        let rho_next = dot(&r_hat, &r);
        if rho_next == 0.0 {
            break;
        }
        let beta = (rho_next / rho) * (alpha / omega);
        rho = rho_next;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let p_hat = precond(&p);
        v = a.matvec(&p_hat);
        alpha = rho / dot(&r_hat, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if dot(&s, &s).sqrt() / rhs_norm < KRYLOV_TOL {
            for i in 0..n {
                x[i] += alpha * p_hat[i];
            }
            return Ok(x);
        }
        let s_hat = precond(&s);
        let t = a.matvec(&s_hat);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        residual = dot(&r, &r).sqrt() / rhs_norm;
        if omega == 0.0 {
            break;
        }
    }
    if residual < KRYLOV_TOL {
        Ok(x)
    } else {
        Err(Error::NoConvergence {
            iterations: KRYLOV_MAX_ITER,
            residual,
        })
    }
}
