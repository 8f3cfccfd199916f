use serde::{Deserialize, Serialize};

use super::propagator::{Propagator, Scheme};
use crate::error::{invalid, Error, Result};
use crate::field::{SpaceTimeField, VectorField};
use crate::model::{CoefficientField, Mat2, Point, SpaceTimeGrid};

/// Relative threshold below which the score `p^{-1} grad p` is not evaluated.
pub const SCORE_FLOOR: f64 = 1e-12;
/// Allowed negative mass, relative to the slice maximum, before a step is declared unstable.
const NEGATIVE_TOL: f64 = 1e-10;

/// Initial mass of the kernel at the source.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DeltaShape {
    /// Unit mass on the nearest node (density `1/h^d`).
    #[default]
    Cell,
    /// Gaussian bump of the given standard deviation, normalized on the grid.
    Gaussian { width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct KernelOptions {
    pub scheme: Scheme,
    pub delta: DeltaShape,
}

/// Gridded `p(s, x, t, y)` for `t` on the grid slices `first..=nt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionKernel {
    pub source_time: f64,
    pub source_point: Point,
    pub source_node: usize,
    /// Density; slice `first` holds the discrete delta.
    pub p: SpaceTimeField,
    pub grad_p: VectorField,
    /// `p^{-1} grad p` where `p > SCORE_FLOOR * max p`, zero elsewhere.
    pub score: VectorField,
    /// Per slice: number of nodes where the score was clamped.
    pub flagged: Vec<usize>,
    /// Per slice: total mass before renormalization.
    pub raw_mass: Vec<f64>,
    /// Per slice: mean and covariance of the density.
    pub means: Vec<Point>,
    pub covariances: Vec<Mat2>,
    pub scheme: Scheme,
}

impl TransitionKernel {
    pub fn grid(&self) -> SpaceTimeGrid {
        self.p.grid
    }

    pub fn first(&self) -> usize {
        self.p.first
    }

    pub fn density(&self, k: usize, y: &Point) -> f64 {
        self.p.interp(k, y)
    }

    pub fn score_at(&self, k: usize, y: &Point) -> Point {
        self.score.interp(k, y)
    }

    pub fn mean(&self, k: usize) -> Point {
        self.means[k - self.first()]
    }

    pub fn covariance(&self, k: usize) -> Mat2 {
        self.covariances[k - self.first()]
    }

    pub fn mass(&self, k: usize) -> f64 {
        self.raw_mass[k - self.first()]
    }

    pub fn total_flagged(&self) -> usize {
        self.flagged.iter().sum()
    }
}

fn initial_mass(grid: &SpaceTimeGrid, node: usize, delta: DeltaShape) -> Result<Vec<f64>> {
    let space = grid.space;
    let mut m = vec![0.0; space.len()];
    match delta {
        DeltaShape::Cell => m[node] = 1.0,
        DeltaShape::Gaussian { width } => {
            if !(width > 0.0) {
                return invalid("mollifier width must be positive");
            }
            let c = space.coord(node);
            for (idx, v) in m.iter_mut().enumerate() {
                if !space.is_boundary(idx) {
                    let y = space.coord(idx);
                    let r2: f64 = (0..space.dim).map(|k| (y[k] - c[k]).powi(2)).sum();
                    *v = (-0.5 * r2 / (width * width)).exp();
                }
            }
            let total: f64 = m.iter().sum();
            m.iter_mut().for_each(|v| *v /= total);
        }
    }
    Ok(m)
}

fn source_node(grid: &SpaceTimeGrid, x: &Point) -> Result<usize> {
    match grid.space.nearest(x) {
        Some(node) if !grid.space.is_boundary(node) => Ok(node),
        _ => invalid(format!("source {:?} is not in the box interior", &x[..grid.dim()])),
    }
}

/// Pushes node masses forward from `(t_first, x)`, calling `visit(k, masses)` on every slice
/// including the initial one. Masses are the raw (unrenormalized) probabilities.
pub(crate) fn propagate_masses(
    cf: &CoefficientField,
    grid: &SpaceTimeGrid,
    scheme: Scheme,
    first: usize,
    x: &Point,
    mut visit: impl FnMut(usize, &[f64]),
) -> Result<()> {
    let node = source_node(grid, x)?;
    let prop = Propagator::new(cf, grid, scheme)?;
    let mut m = initial_mass(grid, node, DeltaShape::Cell)?;
    visit(first, &m);
    for n in first..grid.nt {
        m = prop.step(n)?.forward(&m)?;
        clip_negative(&mut m, n + 1)?;
        visit(n + 1, &m);
    }
    Ok(())
}

fn clip_negative(m: &mut [f64], slice: usize) -> Result<()> {
    let max = m.iter().fold(0.0f64, |a, v| a.max(*v));
    let min = m.iter().fold(0.0f64, |a, v| a.min(*v));
    if min < -NEGATIVE_TOL * max {
        return Err(Error::NegativeMass { slice, mass: min });
    }
    m.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(())
}

/// Fundamental solution from `(s, x)`: a discrete delta evolved forward by the exact adjoint
/// of the backward Cauchy step, so that kernel integrals reproduce `solve_cauchy` outputs.
/// `s` and `x` are snapped to the nearest grid time and node.
pub fn fundamental_solution(
    cf: &CoefficientField,
    s: f64,
    x: &Point,
    grid: &SpaceTimeGrid,
    options: KernelOptions,
) -> Result<TransitionKernel> {
    let first = grid.time_index(s);
    if grid.nt < first + 2 {
        return invalid(format!("need T - s >= 2 tau, got s = {s}"));
    }
    let node = source_node(grid, x)?;
    let prop = Propagator::new(cf, grid, options.scheme)?;
    let space = grid.space;
    let cell = space.cell_volume();
    let mut p = SpaceTimeField::zeros(*grid, first);
    let mut raw_mass = Vec::with_capacity(grid.nt + 1 - first);
    let mut m = initial_mass(grid, node, options.delta)?;
    for k in first..=grid.nt {
        if k > first {
            m = prop.step(k - 1)?.forward(&m)?;
            clip_negative(&mut m, k)?;
        }
        let mass: f64 = m.iter().sum();
        if !(mass > 0.0) {
            return Err(Error::NegativeMass { slice: k, mass });
        }
        raw_mass.push(mass);
        // interior nodes carry quadrature weight h^d, boundary nodes carry no mass
        for (d, v) in p.slice_mut(k).iter_mut().zip(&m) {
            *d = v / (mass * cell);
        }
    }
    p.check_finite("kernel density")?;
    let grad_p = p.gradient();
    let mut score = VectorField::zeros(*grid, first);
    let mut flagged = Vec::with_capacity(raw_mass.len());
    for k in first..=grid.nt {
        let slice = p.slice(k);
        let floor = SCORE_FLOOR * slice.iter().fold(0.0f64, |a, v| a.max(*v));
        let mut count = 0;
        if k > first {
            for idx in 0..space.len() {
                if slice[idx] > floor {
                    for (c, comp) in score.comps.iter_mut().enumerate() {
                        comp.slice_mut(k)[idx] = grad_p.comps[c].slice(k)[idx] / slice[idx];
                    }
                } else {
                    count += 1;
                }
            }
        } else {
            // the delta slice has no usable score
            count = space.len();
        }
        flagged.push(count);
    }
    let (means, covariances) = (first..=grid.nt).map(|k| slice_moments(&p, k)).unzip();
    Ok(TransitionKernel {
        source_time: grid.time(first),
        source_point: space.coord(node),
        source_node: node,
        p,
        grad_p,
        score,
        flagged,
        raw_mass,
        means,
        covariances,
        scheme: options.scheme,
    })
}

fn slice_moments(p: &SpaceTimeField, k: usize) -> (Point, Mat2) {
    let g = p.space();
    let s = p.slice(k);
    let cell = g.cell_volume();
    let mut mean = [0.0; 2];
    for (idx, v) in s.iter().enumerate() {
        let y = g.coord(idx);
        for c in 0..g.dim {
            mean[c] += v * cell * y[c];
        }
    }
    let mut cov = [[0.0; 2]; 2];
    for (idx, v) in s.iter().enumerate() {
        let y = g.coord(idx);
        for i in 0..g.dim {
            for j in 0..g.dim {
                cov[i][j] += v * cell * (y[i] - mean[i]) * (y[j] - mean[j]);
            }
        }
    }
    (mean, cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SpaceGrid;

    fn gaussian(t: f64, y: f64) -> f64 {
        (-y * y / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t).sqrt()
    }

    #[test]
    fn matches_heat_kernel() {
        let g = SpaceTimeGrid::new(SpaceGrid::cube(1, -5.0, 5.0, 201).unwrap(), 1.0, 400).unwrap();
        let k = fundamental_solution(
            &CoefficientField::identity(1),
            0.0,
            &[0.0, 0.0],
            &g,
            KernelOptions {
                scheme: Scheme::CRANK_NICOLSON,
                ..Default::default()
            },
        )
        .unwrap();
        for step in 20..=g.nt {
            let t = g.time(step);
            let slice = k.p.slice(step);
            let peak = gaussian(t, 0.0);
            let worst = (0..g.space.len())
                .map(|i| (slice[i] - gaussian(t, g.space.coord(i)[0])).abs())
                .fold(0.0f64, f64::max);
            assert!(worst / peak < 0.02, "t={t}: {}", worst / peak);
            assert!((k.mass(step) - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn score_of_heat_kernel() {
        let g = SpaceTimeGrid::new(SpaceGrid::cube(1, -5.0, 5.0, 201).unwrap(), 1.0, 200).unwrap();
        let k = fundamental_solution(
            &CoefficientField::identity(1),
            0.0,
            &[0.0, 0.0],
            &g,
            KernelOptions::default(),
        )
        .unwrap();
        let step = 100;
        let t = g.time(step);
        for y in [-1.0, -0.3, 0.4, 1.5] {
            let s = k.score_at(step, &[y, 0.0])[0];
            assert!((s + y / t).abs() < 0.02 * (1.0 + y.abs() / t), "y={y}: {s}");
        }
    }

    #[test]
    fn chapman_kolmogorov_through_midpoint() {
        let cf = CoefficientField::identity(1);
        let g = SpaceTimeGrid::new(SpaceGrid::cube(1, -4.0, 4.0, 81).unwrap(), 1.0, 40).unwrap();
        let from_start = fundamental_solution(&cf, 0.0, &[0.3, 0.0], &g, KernelOptions::default()).unwrap();
        let r = 20;
        let h = g.space.h[0];
        let mut composed = vec![0.0; g.space.len()];
        for z in 1..g.space.len() - 1 {
            let w = from_start.p.slice(r)[z] * from_start.mass(r) * h;
            if w == 0.0 {
                continue;
            }
            let from_mid =
                fundamental_solution(&cf, g.time(r), &g.space.coord(z), &g, KernelOptions::default()).unwrap();
            for (c, v) in composed.iter_mut().zip(from_mid.p.slice(g.nt)) {
                *c += w * v * from_mid.mass(g.nt);
            }
        }
        let direct: Vec<f64> = from_start
            .p
            .slice(g.nt)
            .iter()
            .map(|v| v * from_start.mass(g.nt))
            .collect();
        for (a, b) in composed.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn mass_conserved_for_sine_coefficients() {
        let cf = CoefficientField::from_preset(
            1,
            crate::model::Preset::ScalarSine {
                base: 1.0,
                amp: 0.5,
                freq: 1.0,
                omega: 0.0,
                drift: vec![0.3],
            },
        )
        .unwrap();
        let g = SpaceTimeGrid::new(SpaceGrid::cube(1, -6.0, 6.0, 121).unwrap(), 1.0, 100).unwrap();
        let k = fundamental_solution(&cf, 0.0, &[0.0, 0.0], &g, KernelOptions::default()).unwrap();
        assert!(k.p.data.iter().all(|v| *v >= 0.0));
        assert!(k.raw_mass.iter().all(|m| (m - 1.0).abs() < 1e-3));
    }

    #[test]
    fn boundary_source_rejected() {
        let g = SpaceTimeGrid::new(SpaceGrid::cube(1, -1.0, 1.0, 11).unwrap(), 1.0, 10).unwrap();
        let cf = CoefficientField::identity(1);
        assert!(fundamental_solution(&cf, 0.0, &[1.0, 0.0], &g, KernelOptions::default()).is_err());
        assert!(fundamental_solution(&cf, 0.95, &[0.0, 0.0], &g, KernelOptions::default()).is_err());
    }
}
