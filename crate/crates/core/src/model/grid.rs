use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Spatial point. Only the first `dim` coordinates are meaningful; the rest stay zero.
pub type Point = [f64; 2];

/// Symmetric-or-not 2×2 matrix; the leading `dim`×`dim` block is used.
pub type Mat2 = [[f64; 2]; 2];

pub const MAX_DIM: usize = 2;

pub fn point(coords: &[f64]) -> Point {
    let mut p = [0.0; 2];
    for (dst, src) in p.iter_mut().zip(coords) {
        *dst = *src;
    }
    p
}

pub fn dot(dim: usize, a: &Point, b: &Point) -> f64 {
    (0..dim).map(|i| a[i] * b[i]).sum()
}

pub fn norm2(dim: usize, a: &Point) -> f64 {
    dot(dim, a, a)
}

pub fn mat_vec(dim: usize, m: &Mat2, v: &Point) -> Point {
    let mut out = [0.0; 2];
    for i in 0..dim {
        for j in 0..dim {
            out[i] += m[i][j] * v[j];
        }
    }
    out
}

/// Uniform tensor grid on a box, `n` nodes per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceGrid {
    pub dim: usize,
    pub lo: Point,
    pub hi: Point,
    pub n: usize,
    pub h: Point,
}

/// Bilinear interpolation stencil: up to four (node, weight) pairs.
#[derive(Debug, Clone, Copy)]
pub struct Stencil {
    pub nodes: [usize; 4],
    pub weights: [f64; 4],
    pub len: usize,
}

impl SpaceGrid {
    pub fn new(dim: usize, lo: &[f64], hi: &[f64], n: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return invalid(format!("dimension must be 1 or 2, got {dim}"));
        }
        if lo.len() != dim || hi.len() != dim {
            return invalid("box bounds must have one entry per axis");
        }
        if n < 3 {
            return invalid(format!("need at least 3 nodes per axis, got {n}"));
        }
        let mut h = [0.0; 2];
        for i in 0..dim {
            if !(lo[i].is_finite() && hi[i].is_finite() && hi[i] > lo[i]) {
                return invalid(format!("empty or non-finite box on axis {i}"));
            }
            h[i] = (hi[i] - lo[i]) / (n - 1) as f64;
        }
        Ok(Self {
            dim,
            lo: point(lo),
            hi: point(hi),
            n,
            h,
        })
    }

    /// Same interval on every axis.
    pub fn cube(dim: usize, lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(dim, &vec![lo; dim], &vec![hi; dim], n)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|i| self.h[i]).product()
    }

    pub fn box_volume(&self) -> f64 {
        (0..self.dim).map(|i| self.hi[i] - self.lo[i]).product()
    }

    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        [idx % self.n, if self.dim > 1 { idx / self.n } else { 0 }]
    }

    pub fn flat_index(&self, mi: [usize; 2]) -> usize {
        if self.dim == 1 {
            mi[0]
        } else {
            mi[0] + self.n * mi[1]
        }
    }

    pub fn coord(&self, idx: usize) -> Point {
        let mi = self.multi_index(idx);
        let mut p = [0.0; 2];
        for (k, coord) in p.iter_mut().enumerate().take(self.dim) {
            *coord = self.lo[k] + mi[k] as f64 * self.h[k];
        }
        p
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        let mi = self.multi_index(idx);
        (0..self.dim).any(|k| mi[k] == 0 || mi[k] == self.n - 1)
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..self.dim).all(|k| p[k] >= self.lo[k] - 1e-12 && p[k] <= self.hi[k] + 1e-12)
    }

    /// Nearest node, or `None` when the point is outside the box.
    pub fn nearest(&self, p: &Point) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        let mut mi = [0usize; 2];
        for k in 0..self.dim {
            let u = ((p[k] - self.lo[k]) / self.h[k]).round();
            mi[k] = (u.max(0.0) as usize).min(self.n - 1);
        }
        Some(self.flat_index(mi))
    }

    /// Bilinear stencil at `p`; points outside the box are clamped to it.
    pub fn stencil(&self, p: &Point) -> Stencil {
        let mut base = [0usize; 2];
        let mut frac = [0.0; 2];
        for k in 0..self.dim {
            let u = ((p[k] - self.lo[k]) / self.h[k]).clamp(0.0, (self.n - 1) as f64);
            let i = (u.floor() as usize).min(self.n - 2);
            base[k] = i;
            frac[k] = u - i as f64;
        }
        let mut st = Stencil {
            nodes: [0; 4],
            weights: [0.0; 4],
            len: 0,
        };
        if self.dim == 1 {
            st.nodes[0] = base[0];
            st.weights[0] = 1.0 - frac[0];
            st.nodes[1] = base[0] + 1;
            st.weights[1] = frac[0];
            st.len = 2;
        } else {
            let mut m = 0;
            for dy in 0..2 {
                for dx in 0..2 {
                    let wx = if dx == 0 { 1.0 - frac[0] } else { frac[0] };
                    let wy = if dy == 0 { 1.0 - frac[1] } else { frac[1] };
                    st.nodes[m] = self.flat_index([base[0] + dx, base[1] + dy]);
                    st.weights[m] = wx * wy;
                    m += 1;
                }
            }
            st.len = 4;
        }
        st
    }

    /// Trapezoid quadrature weight of node `idx`.
    pub fn quad_weight(&self, idx: usize) -> f64 {
        let mi = self.multi_index(idx);
        (0..self.dim)
            .map(|k| {
                if mi[k] == 0 || mi[k] == self.n - 1 {
                    0.5 * self.h[k]
                } else {
                    self.h[k]
                }
            })
            .product()
    }

    /// Flat index of the neighbour `offset` cells away along `axis`, if inside.
    pub fn neighbour(&self, idx: usize, axis: usize, offset: isize) -> Option<usize> {
        let mut mi = self.multi_index(idx);
        let v = mi[axis] as isize + offset;
        if v < 0 || v >= self.n as isize {
            return None;
        }
        mi[axis] = v as usize;
        Some(self.flat_index(mi))
    }
}

/// Space grid plus a uniform time grid `t_k = k * tau` on `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    pub space: SpaceGrid,
    pub horizon: f64,
    pub nt: usize,
    pub tau: f64,
}

impl SpaceTimeGrid {
    pub fn new(space: SpaceGrid, horizon: f64, nt: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return invalid(format!("horizon must be positive, got {horizon}"));
        }
        if nt < 2 {
            return invalid(format!("need at least 2 time steps, got {nt}"));
        }
        Ok(Self {
            space,
            horizon,
            nt,
            tau: horizon / nt as f64,
        })
    }

    pub fn dim(&self) -> usize {
        self.space.dim
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.nt {
            self.horizon
        } else {
            k as f64 * self.tau
        }
    }

    /// Index of the grid time closest to `t`.
    pub fn time_index(&self, t: f64) -> usize {
        ((t / self.tau).round().max(0.0) as usize).min(self.nt)
    }

    /// Exact grid index for `t`, or `None` if `t` is not (to rounding) a grid time.
    pub fn exact_time_index(&self, t: f64) -> Option<usize> {
        let k = self.time_index(t);
        ((self.time(k) - t).abs() <= 1e-9 * self.horizon.max(1.0)).then_some(k)
    }

    pub fn with_nt(&self, nt: usize) -> Result<Self> {
        Self::new(self.space, self.horizon, nt)
    }
}

/// Strictly increasing list of times `s = t_0 < ... < t_m = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub times: Vec<f64>,
    pub mesh: f64,
}

impl Partition {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return invalid("a partition needs at least two points");
        }
        let mut mesh: f64 = 0.0;
        for w in times.windows(2) {
            if !(w[1] > w[0]) {
                return invalid("partition times must be strictly increasing");
            }
            mesh = mesh.max(w[1] - w[0]);
        }
        Ok(Self { times, mesh })
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }

    pub fn is_subset_of(&self, other: &Partition) -> bool {
        self.times
            .iter()
            .all(|t| other.times.iter().any(|u| (u - t).abs() <= 1e-12))
    }
}

/// Uniform dyadic partitions of `[s, t_end]` for levels `1..=max_level`.
pub fn dyadic_partitions(s: f64, t_end: f64, max_level: u32) -> Result<Vec<Partition>> {
    if !(s >= 0.0 && t_end > s) {
        return invalid(format!("need 0 <= s < T, got s={s}, T={t_end}"));
    }
    if max_level < 1 {
        return invalid("max_level must be at least 1");
    }
    (1..=max_level).map(|m| dyadic_partition(s, t_end, m)).collect()
}

pub fn dyadic_partition(s: f64, t_end: f64, level: u32) -> Result<Partition> {
    let k = 1usize << level;
    let times = (0..=k)
        .map(|i| {
            if i == k {
                t_end
            } else {
                s + (t_end - s) * i as f64 / k as f64
            }
        })
        .collect();
    Partition::new(times)
}
