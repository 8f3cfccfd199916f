//! Gridded space-time functions and vector fields.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, invalid, Result};
use crate::model::{Point, SpaceGrid, SpaceTimeGrid};

/// Scalar function on the time slices `first..=nt` of a [`SpaceTimeGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeField {
    pub grid: SpaceTimeGrid,
    pub first: usize,
    pub data: Vec<f64>,
}

impl SpaceTimeField {
    pub fn zeros(grid: SpaceTimeGrid, first: usize) -> Self {
        let slices = grid.nt + 1 - first;
        Self {
            grid,
            first,
            data: vec![0.0; slices * grid.space.len()],
        }
    }

    pub fn from_fn(grid: SpaceTimeGrid, first: usize, f: impl Fn(f64, &Point) -> f64) -> Self {
        let mut out = Self::zeros(grid, first);
        for k in first..=grid.nt {
            let t = grid.time(k);
            let slice = out.slice_mut(k);
            for (idx, v) in slice.iter_mut().enumerate() {
                *v = f(t, &grid.space.coord(idx));
            }
        }
        out
    }

    /// Time-independent field repeated on every slice.
    pub fn from_space_fn(grid: SpaceTimeGrid, f: impl Fn(&Point) -> f64) -> Self {
        Self::from_fn(grid, 0, |_, x| f(x))
    }

    pub fn space(&self) -> &SpaceGrid {
        &self.grid.space
    }

    pub fn last(&self) -> usize {
        self.grid.nt
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.grid.space.len();
        let off = (k - self.first) * n;
        &self.data[off..off + n]
    }

    pub fn slice_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.grid.space.len();
        let off = (k - self.first) * n;
        &mut self.data[off..off + n]
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        check_finite(what, &self.data)
    }

    /// Bilinear interpolation in space on slice `k`.
    pub fn interp(&self, k: usize, x: &Point) -> f64 {
        let st = self.grid.space.stencil(x);
        let s = self.slice(k);
        (0..st.len).map(|m| st.weights[m] * s[st.nodes[m]]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid || self.first != other.first {
            return invalid("fields live on different grids");
        }
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(out)
    }

    /// Centered-difference gradient on interior nodes, one-sided on the boundary.
    pub fn gradient(&self) -> VectorField {
        let g = self.grid.space;
        let mut comps: Vec<SpaceTimeField> = (0..g.dim).map(|_| Self::zeros(self.grid, self.first)).collect();
        for k in self.first..=self.grid.nt {
            let s = self.slice(k);
            for (axis, comp) in comps.iter_mut().enumerate() {
                let out = comp.slice_mut(k);
                for idx in 0..g.len() {
                    out[idx] = slice_derivative(&g, s, idx, axis);
                }
            }
        }
        VectorField { comps }
    }
}

pub(crate) fn slice_derivative(g: &SpaceGrid, s: &[f64], idx: usize, axis: usize) -> f64 {
    let h = g.h[axis];
    match (g.neighbour(idx, axis, -1), g.neighbour(idx, axis, 1)) {
        (Some(l), Some(r)) => (s[r] - s[l]) / (2.0 * h),
        (None, Some(r)) => (s[r] - s[idx]) / h,
        (Some(l), None) => (s[idx] - s[l]) / h,
        (None, None) => 0.0,
    }
}

/// `d` scalar fields on the same grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub comps: Vec<SpaceTimeField>,
}

impl VectorField {
    pub fn zeros(grid: SpaceTimeGrid, first: usize) -> Self {
        Self {
            comps: (0..grid.dim()).map(|_| SpaceTimeField::zeros(grid, first)).collect(),
        }
    }

    pub fn from_fn(grid: SpaceTimeGrid, first: usize, f: impl Fn(f64, &Point) -> Point) -> Self {
        let comps = (0..grid.dim())
            .map(|c| SpaceTimeField::from_fn(grid, first, |t, x| f(t, x)[c]))
            .collect();
        Self { comps }
    }

    pub fn dim(&self) -> usize {
        self.comps.len()
    }

    pub fn grid(&self) -> SpaceTimeGrid {
        self.comps[0].grid
    }

    pub fn interp(&self, k: usize, x: &Point) -> Point {
        let mut out = [0.0; 2];
        for (c, f) in self.comps.iter().enumerate() {
            out[c] = f.interp(k, x);
        }
        out
    }

    pub fn at(&self, k: usize, idx: usize) -> Point {
        let mut out = [0.0; 2];
        for (c, f) in self.comps.iter().enumerate() {
            out[c] = f.slice(k)[idx];
        }
        out
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            comps: self.comps.iter().map(|f| f.scaled(c)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(a, b)| a.add(b))
            .collect::<Result<_>>()?;
        Ok(Self { comps })
    }

    /// Pointwise Euclidean norm as a scalar field.
    pub fn magnitude(&self) -> SpaceTimeField {
        let mut out = self.comps[0].clone();
        for (i, v) in out.data.iter_mut().enumerate() {
            *v = self.comps.iter().map(|c| c.data[i] * c.data[i]).sum::<f64>().sqrt();
        }
        out
    }

    pub fn check_finite(&self, what: &'static str) -> Result<()> {
        self.comps.iter().try_for_each(|c| c.check_finite(what))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_exact_for_quadratics_on_interior() {
        let g = SpaceTimeGrid::new(SpaceGrid::cube(2, -1.0, 1.0, 21).unwrap(), 1.0, 2).unwrap();
        let f = SpaceTimeField::from_fn(g, 0, |t, x| x[0] * x[0] + 3.0 * x[0] * x[1] + t);
        let grad = f.gradient();
        for idx in 0..g.space.len() {
            if g.space.is_boundary(idx) {
                continue;
            }
            let x = g.space.coord(idx);
            let gr = grad.at(1, idx);
            assert!((gr[0] - (2.0 * x[0] + 3.0 * x[1])).abs() < 1e-12);
            assert!((gr[1] - 3.0 * x[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn interp_matches_nodes() {
        let g = SpaceTimeGrid::new(SpaceGrid::cube(1, 0.0, 1.0, 11).unwrap(), 1.0, 2).unwrap();
        let f = SpaceTimeField::from_space_fn(g, |x| x[0].sin());
        assert_eq!(f.interp(0, &[0.3, 0.0]), f.slice(0)[3]);
        let mid = f.interp(1, &[0.35, 0.0]);
        assert!((mid - 0.5 * (0.3f64.sin() + 0.4f64.sin())).abs() < 1e-14);
    }
}
