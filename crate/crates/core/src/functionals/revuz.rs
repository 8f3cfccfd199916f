use serde::{Deserialize, Serialize};

use crate::calculus::{along_paths, FunctionalSample, Integrand};
use crate::error::{invalid, Error, Result};
use crate::field::SpaceTimeField;
use crate::model::Point;
use crate::paths::PathEnsemble;
use crate::pde::TransitionKernel;
use crate::report::BoundReport;
use crate::stats::{mean_se, trapezoid_weight};

/// Smooth measures on `Q_T` with no atoms on time slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RevuzMeasure {
    /// `f(t, y) dt dy`.
    Density { density: SpaceTimeField },
    /// `mass * dt (x) delta_{x0}`: a point in space smeared over all times.
    PointMass { point: Point, mass: f64 },
    /// Finitely many point masses in space, each smeared over time.
    GridAtoms { atoms: Vec<(Point, f64)> },
}

impl RevuzMeasure {
    /// `int xi(t, y) p(s, x, t, y) dmu(t, y)`, trapezoid in time over the kernel's slices.
    pub fn pair_with_kernel(&self, kernel: &TransitionKernel, xi: &dyn Integrand) -> Result<f64> {
        let grid = kernel.grid();
        let space = grid.space;
        let first = kernel.first();
        let steps = grid.nt - first;
        let atoms: Vec<(Point, f64)> = match self {
            Self::Density { density } => {
                if density.grid != grid {
                    return Err(Error::Mismatch("density and kernel live on different grids".into()));
                }
                Vec::new()
            }
            Self::PointMass { point, mass } => vec![(*point, *mass)],
            Self::GridAtoms { atoms } => atoms.clone(),
        };
        for (p, _) in &atoms {
            if !space.contains(p) {
                return invalid("atom lies outside the grid box");
            }
        }
        let mut total = 0.0;
        for k in first..=grid.nt {
            let t = grid.time(k);
            let slice_value = match self {
                Self::Density { density } => {
                    let p = kernel.p.slice(k);
                    let f = density.slice(k);
                    (0..space.len())
                        .map(|i| space.quad_weight(i) * xi.eval(k, t, &space.coord(i))[0] * p[i] * f[i])
                        .sum()
                }
                _ => atoms
                    .iter()
                    .map(|(y, m)| m * xi.eval(k, t, y)[0] * kernel.density(k, y))
                    .sum::<f64>(),
            };
            total += trapezoid_weight(k - first, steps, grid.tau) * slice_value;
        }
        Ok(total)
    }
}

/// `E int xi(t, X_t) dC_{s,t}` with left endpoints, as `(mean, standard error)`.
pub fn stieltjes_mean(c: &FunctionalSample, xi: &dyn Integrand, e: &PathEnsemble) -> Result<(f64, f64)> {
    if c.n_paths != e.n_paths || c.steps != e.steps {
        return Err(Error::Mismatch(format!(
            "sample '{}' does not match the ensemble",
            c.label
        )));
    }
    let values = along_paths(xi, e);
    let w = e.steps + 1;
    let per_path: Vec<f64> = c
        .active_paths()
        .map(|j| (0..e.steps).map(|k| values[j * w + k][0] * c.increment(j, k)).sum())
        .collect();
    Ok(mean_se(&per_path))
}

/// Compares `E int xi dC` with `int xi p dmu`; the statistic is the relative error and the
/// check passes below `tolerance`.
pub fn revuz_check(
    c: &FunctionalSample,
    mu: &RevuzMeasure,
    kernel: &TransitionKernel,
    xi: &dyn Integrand,
    e: &PathEnsemble,
    tolerance: f64,
) -> Result<BoundReport> {
    if kernel.grid() != e.grid || kernel.first() != e.first {
        return Err(Error::Mismatch("kernel and ensemble start differently".into()));
    }
    let (lhs, se) = stieltjes_mean(c, xi, e)?;
    let rhs = mu.pair_with_kernel(kernel, xi)?;
    let rel = if lhs == 0.0 && rhs == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE)
    };
    Ok(BoundReport::new("revuz", rel, 0.0, tolerance, rel < tolerance)
        .with("lhs", lhs)
        .with("lhs_se", se)
        .with("rhs", rhs))
}

/// `U^alpha_A eta(s, x) = E int e^{-alpha (t - s)} eta(t, X_t) dA_{s,t}`, as `(mean, standard error)`.
/// The discount is averaged over each step's endpoints.
pub fn laplace_transform(
    a: &FunctionalSample,
    eta: &dyn Integrand,
    alpha: f64,
    e: &PathEnsemble,
) -> Result<(f64, f64)> {
    if !(alpha >= 0.0) {
        return invalid(format!("Laplace parameter must be nonnegative, got {alpha}"));
    }
    if a.n_paths != e.n_paths || a.steps != e.steps {
        return Err(Error::Mismatch(format!(
            "sample '{}' does not match the ensemble",
            a.label
        )));
    }
    let s = e.source_time();
    let discount: Vec<f64> = (0..e.steps)
        .map(|k| 0.5 * ((-alpha * (e.time(k) - s)).exp() + (-alpha * (e.time(k + 1) - s)).exp()))
        .collect();
    let values = along_paths(eta, e);
    let w = e.steps + 1;
    let per_path: Vec<f64> = a
        .active_paths()
        .map(|j| {
            (0..e.steps)
                .map(|k| discount[k] * values[j * w + k][0] * a.increment(j, k))
                .sum()
        })
        .collect();
    Ok(mean_se(&per_path))
}
