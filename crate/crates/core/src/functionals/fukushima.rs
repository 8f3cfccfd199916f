use rayon::prelude::*;

use crate::calculus::{
    along_paths, forward_integral, star_integral, variation_ladder, FunctionalSample, Integrand, InverseDiffusion,
    Parts, QVReport,
};
use crate::error::{invalid, Error, Result};
use crate::field::{SpaceTimeField, VectorField};
use crate::model::{CoefficientField, Partition, Point};
use crate::paths::{PathEnsemble, ReversedEnsemble};
use crate::pde::{DistributionData, WeakSolution};

fn check_grid(u: &WeakSolution, e: &PathEnsemble) -> Result<()> {
    if u.grid() != e.grid {
        return Err(Error::Mismatch("solution and ensemble live on different grids".into()));
    }
    Ok(())
}

fn check_inside(e: &PathEnsemble) -> Result<()> {
    let space = e.grid.space;
    for j in 0..e.n_paths {
        for k in 0..=e.steps {
            if !space.contains(&e.point(j, k)) {
                return invalid(format!("path {j} leaves the grid box at step {k}"));
            }
        }
    }
    Ok(())
}

/// `X^u_{s,t} = u(t, X_t) - u(s, X_s)` by bilinear interpolation along every path.
pub fn compose_functional(u: &WeakSolution, e: &PathEnsemble) -> Result<FunctionalSample> {
    check_grid(u, e)?;
    check_inside(e)?;
    let values = along_paths(&u.u, e);
    let w = e.steps + 1;
    Ok(FunctionalSample::from_increments("X^u", e.n_paths, e.steps, |j, k| {
        values[j * w + k + 1][0] - values[j * w + k][0]
    }))
}

/// `int f(theta, X_theta) dtheta` with trapezoid steps.
pub fn time_integral(f: &dyn Integrand, e: &PathEnsemble) -> FunctionalSample {
    let values = along_paths(f, e);
    let w = e.steps + 1;
    let tau = e.grid.tau;
    FunctionalSample::from_increments("int f dtheta", e.n_paths, e.steps, |j, k| {
        0.5 * tau * (values[j * w + k][0] + values[j * w + k + 1][0])
    })
}

/// Scalar field as a scalar integrand; the vector slot carries the value in its first entry.
struct Scaled<'a> {
    field: &'a SpaceTimeField,
    factor: &'a SpaceTimeField,
}

impl Integrand for Scaled<'_> {
    fn eval(&self, k: usize, _t: f64, x: &Point) -> Point {
        [self.field.interp(k, x) * self.factor.interp(k, x), 0.0]
    }
}

struct ScaledVector<'a> {
    field: &'a VectorField,
    factor: &'a SpaceTimeField,
}

impl Integrand for ScaledVector<'_> {
    fn eval(&self, k: usize, _t: f64, x: &Point) -> Point {
        let v = self.field.interp(k, x);
        let c = self.factor.interp(k, x);
        [v[0] * c, v[1] * c]
    }
}

struct Dot<'a> {
    left: &'a VectorField,
    right: &'a VectorField,
    dim: usize,
}

impl Integrand for Dot<'_> {
    fn eval(&self, k: usize, _t: f64, x: &Point) -> Point {
        let a = self.left.interp(k, x);
        let b = self.right.interp(k, x);
        [(0..self.dim).map(|i| a[i] * b[i]).sum(), 0.0]
    }
}

/// The CAF with representation `Phi = f0 + div fbar`:
/// `int f0(theta, X_theta) dtheta + int a^{-1} fbar(theta, X_theta) d*X_theta`.
pub fn additive_functional(
    phi: &DistributionData,
    e: &PathEnsemble,
    parts: &Parts,
    reversed: &ReversedEnsemble,
    cf: &CoefficientField,
) -> Result<FunctionalSample> {
    if phi.grid() != e.grid {
        return Err(Error::Mismatch("data and ensemble live on different grids".into()));
    }
    let lebesgue = time_integral(&phi.f0, e);
    let inv = InverseDiffusion { cf, inner: &phi.fbar };
    let star = star_integral(&inv, parts, e, reversed)?;
    lebesgue.combine(1.0, &star, 1.0, "A^Phi")
}

/// `(eta . A)_{s,t} = int eta f0 dtheta - int grad eta . fbar dtheta + int a^{-1} fbar eta d*X`.
pub fn caf_integral(
    eta: &WeakSolution,
    phi: &DistributionData,
    e: &PathEnsemble,
    parts: &Parts,
    reversed: &ReversedEnsemble,
    cf: &CoefficientField,
) -> Result<FunctionalSample> {
    check_grid(eta, e)?;
    if phi.grid() != e.grid {
        return Err(Error::Mismatch("data and ensemble live on different grids".into()));
    }
    let first = time_integral(
        &Scaled {
            field: &phi.f0,
            factor: &eta.u,
        },
        e,
    );
    let second = time_integral(
        &Dot {
            left: &eta.grad_u,
            right: &phi.fbar,
            dim: cf.dim,
        },
        e,
    );
    let weighted = ScaledVector {
        field: &phi.fbar,
        factor: &eta.u,
    };
    let inv = InverseDiffusion { cf, inner: &weighted };
    let third = star_integral(&inv, parts, e, reversed)?;
    first
        .combine(1.0, &second, -1.0, "tmp")?
        .combine(1.0, &third, 1.0, "eta.A")
}

/// `X^u = M^u + A^u` with the per-path residual of the identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Fukushima {
    pub xu: FunctionalSample,
    /// `int grad u(theta, X_theta) . dM`.
    pub mu: FunctionalSample,
    /// `int f0 dtheta + int a^{-1} fbar d*X` for the record `Lu = f0 + div fbar`.
    pub au: FunctionalSample,
    /// Per path: `sup_t |X^u - M^u - A^u|`.
    pub residual: Vec<f64>,
}

impl Fukushima {
    pub fn median_residual(&self) -> f64 {
        let mut r = self.residual.clone();
        if r.is_empty() {
            return 0.0;
        }
        r.sort_by(f64::total_cmp);
        let n = r.len();
        if n % 2 == 1 {
            r[n / 2]
        } else {
            0.5 * (r[n / 2 - 1] + r[n / 2])
        }
    }
}

/// Splits `X^u` into its martingale part and the zero-energy part built from the stored
/// record of `Lu`.
pub fn fukushima_decompose(
    u: &WeakSolution,
    e: &PathEnsemble,
    parts: &Parts,
    reversed: &ReversedEnsemble,
    cf: &CoefficientField,
) -> Result<Fukushima> {
    let xu = compose_functional(u, e)?;
    let mu = FunctionalSample {
        label: "M^u".into(),
        ..forward_integral(&u.grad_u, &parts.m, e)?
    };
    let lu = DistributionData {
        f0: u.lu_f0(),
        fbar: u.lu_fbar(),
    };
    let au = FunctionalSample {
        label: "A^u".into(),
        ..additive_functional(&lu, e, parts, reversed, cf)?
    };
    let w = e.steps + 1;
    let residual = (0..e.n_paths)
        .into_par_iter()
        .map(|j| {
            (0..w)
                .map(|k| (xu.value(j, k) - mu.value(j, k) - au.value(j, k)).abs())
                .fold(0.0f64, f64::max)
        })
        .collect();
    Ok(Fukushima { xu, mu, au, residual })
}

/// Variation ladder of the realized drift `X^u_{t_i, t_{i+1}} - grad u(t_i, X_{t_i}) . (M_{t_{i+1}} - M_{t_i})`
/// on each partition: the zero-quadratic-variation part seen at the partition's own resolution.
pub fn realized_drift_variation(
    u: &WeakSolution,
    e: &PathEnsemble,
    parts: &Parts,
    partitions: &[Partition],
) -> Result<QVReport> {
    let xu = compose_functional(u, e)?;
    let grads = along_paths(&u.grad_u, e);
    let d = e.dim();
    let w = e.steps + 1;
    let paths: Vec<usize> = xu
        .active_paths()
        .filter(|j| parts.m.iter().all(|m| !m.flagged.contains(j)))
        .collect();
    variation_ladder("realized A^u", partitions, e, &paths, |j, a, b| {
        let g = grads[j * w + a];
        let dm: f64 = (0..d).map(|c| g[c] * parts.m[c].between(j, a, b)).sum();
        xu.between(j, a, b) - dm
    })
}
