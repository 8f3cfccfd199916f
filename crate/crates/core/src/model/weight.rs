use serde::{Deserialize, Serialize};

use super::grid::Point;
use crate::error::{invalid, Result};
use crate::field::SpaceTimeField;

/// Polynomial weight `rho(x) = (1 + |x|^2)^(-alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    pub alpha: f64,
    pub dim: usize,
    /// `true` iff `alpha > dim / 2`, i.e. `rho` is integrable over the whole space.
    pub integrable: bool,
}

impl Weight {
    pub fn new(alpha: f64, dim: usize) -> Self {
        Self {
            alpha,
            dim,
            integrable: alpha > dim as f64 / 2.0,
        }
    }

    pub fn unit(dim: usize) -> Self {
        Self::new(0.0, dim)
    }

    /// The weight `rho^{-1}`.
    pub fn inverse(&self) -> Self {
        Self::new(-self.alpha, self.dim)
    }

    /// The weight `rho^{power}`.
    pub fn pow(&self, power: f64) -> Self {
        Self::new(self.alpha * power, self.dim)
    }

    pub fn eval(&self, x: &Point) -> f64 {
        let r2: f64 = x.iter().take(self.dim).map(|c| c * c).sum();
        (1.0 + r2).powf(-self.alpha)
    }
}

/// Mixed `L_{p,q}` norm of `f * rho` over the field's time range: `L_p` in space, `L_q` in time.
/// Trapezoid quadrature in both variables; `f64::INFINITY` selects the sup norm.
pub fn weighted_norm(f: &SpaceTimeField, w: &Weight, p: f64, q: f64) -> Result<f64> {
    weighted_norm_range(f, w, p, q, f.first, f.last())
}

/// As [`weighted_norm`] restricted to time slices `from..=to`.
pub fn weighted_norm_range(f: &SpaceTimeField, w: &Weight, p: f64, q: f64, from: usize, to: usize) -> Result<f64> {
    if !(p >= 1.0 && q >= 1.0) {
        return invalid(format!("exponents must lie in [1, inf], got p={p}, q={q}"));
    }
    if from < f.first || to > f.last() || from > to {
        return invalid("time range outside the field");
    }
    f.check_finite("weighted_norm input")?;
    let g = f.space();
    let rho: Vec<f64> = (0..g.len()).map(|i| w.eval(&g.coord(i))).collect();
    let space_norms: Vec<f64> = (from..=to)
        .map(|k| {
            let s = f.slice(k);
            if p.is_infinite() {
                s.iter().zip(&rho).fold(0.0f64, |m, (v, r)| m.max((v * r).abs()))
            } else {
                let sum: f64 = (0..g.len())
                    .map(|i| g.quad_weight(i) * (s[i] * rho[i]).abs().powf(p))
                    .sum();
                sum.powf(1.0 / p)
            }
        })
        .collect();
    if q.is_infinite() {
        return Ok(space_norms.iter().fold(0.0f64, |m, v| m.max(*v)));
    }
    if from == to {
        // a single slice carries no time mass
        return Ok(0.0);
    }
    let tau = f.grid.tau;
    let last = space_norms.len() - 1;
    let sum: f64 = space_norms
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let wt = if i == 0 || i == last { 0.5 * tau } else { tau };
            wt * v.powf(q)
        })
        .sum();
    Ok(sum.powf(1.0 / q))
}

/// Spatial `L_p` norm of `values * rho` on one grid slice.
pub fn weighted_space_norm(g: &super::SpaceGrid, values: &[f64], w: &Weight, p: f64) -> f64 {
    if p.is_infinite() {
        return (0..g.len()).fold(0.0f64, |m, i| m.max((values[i] * w.eval(&g.coord(i))).abs()));
    }
    let sum: f64 = (0..g.len())
        .map(|i| g.quad_weight(i) * (values[i] * w.eval(&g.coord(i))).abs().powf(p))
        .sum();
    sum.powf(1.0 / p)
}

/// Box half-width `L` such that the `rho^2` mass outside the ball of radius `L` is below
/// `rel_tol` of the total. Requires `rho^2` integrable.
pub fn truncation_radius(w: &Weight, rel_tol: f64) -> Result<f64> {
    if !(2.0 * w.alpha > w.dim as f64 / 2.0) {
        return invalid("rho^2 is not integrable; no finite truncation box exists");
    }
    // radial integrand (1+r^2)^(-2 alpha) r^(d-1) dr on a log-spaced grid, r = e^z
    let (z_lo, z_hi, n) = (-12.0f64, 16.0f64, 40_000);
    let dz = (z_hi - z_lo) / n as f64;
    let integrand = |z: f64| {
        let r = z.exp();
        (1.0 + r * r).powf(-2.0 * w.alpha) * r.powi(w.dim as i32)
    };
    let mut cumulative = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    cumulative.push(0.0);
    for i in 0..n {
        let z = z_lo + i as f64 * dz;
        acc += 0.5 * dz * (integrand(z) + integrand(z + dz));
        cumulative.push(acc);
    }
    let radius = cumulative
        .iter()
        .position(|c| (acc - c) / acc < rel_tol)
        .map(|i| (z_lo + i as f64 * dz).exp());
    radius.ok_or_else(|| crate::Error::InvalidInput("weight decays too slowly for the requested tolerance".into()))
}
