//! Sparse assembly of the grid operator `1/2 div(a grad) + b . grad` with Dirichlet zero boundary.

use crate::model::{CoefficientField, Point, SpaceGrid};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *vals.last_mut().expect("entry exists") += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(c, v)| v * x[c]).sum()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                rows[c].push((i, v));
            }
        }
        Self::from_rows(rows)
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).find(|(c, _)| *c == i).map_or(0.0, |(_, v)| v))
            .collect()
    }

    /// `shift * I + scale * self`.
    pub fn affine(&self, shift: f64, scale: f64) -> Self {
        let rows = (0..self.n)
            .map(|i| {
                let mut r: Vec<(usize, f64)> = self.row(i).map(|(c, v)| (c, scale * v)).collect();
                r.push((i, shift));
                r
            })
            .collect();
        Self::from_rows(rows)
    }

    /// Tridiagonal bands `(lower, diag, upper)` when the matrix is tridiagonal.
    pub fn tridiagonal(&self) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let mut lower = vec![0.0; self.n];
        let mut diag = vec![0.0; self.n];
        let mut upper = vec![0.0; self.n];
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                match c as isize - i as isize {
                    -1 => lower[i] = v,
                    0 => diag[i] = v,
                    1 => upper[i] = v,
                    _ => return None,
                }
            }
        }
        Some((lower, diag, upper))
    }
}

/// Assembles the generator at time `t`. Boundary rows are empty and columns referring to
/// boundary nodes are dropped, which encodes `u = 0` on the boundary (killing).
///
/// Face-midpoint diffusion, centered drift (upwinded where the cell Peclet number would
/// make an off-diagonal negative), and a symmetric 9-point stencil for mixed terms.
pub fn assemble(cf: &CoefficientField, grid: &SpaceGrid, t: f64) -> Csr {
    let dim = grid.dim;
    let rows = (0..grid.len())
        .map(|idx| {
            let mut row = Vec::with_capacity(9);
            if grid.is_boundary(idx) {
                return row;
            }
            let x = grid.coord(idx);
            let b = cf.b(t, &x);
            let mut diag = 0.0;
            for k in 0..dim {
                let h = grid.h[k];
                let left = grid.neighbour(idx, k, -1).expect("interior node");
                let right = grid.neighbour(idx, k, 1).expect("interior node");
                let mut mid = x;
                mid[k] = x[k] + 0.5 * h;
                let a_right = cf.a(t, &mid)[k][k];
                mid[k] = x[k] - 0.5 * h;
                let a_left = cf.a(t, &mid)[k][k];
                let mut w_right = 0.5 * a_right / (h * h);
                let mut w_left = 0.5 * a_left / (h * h);
                let centered = b[k] / (2.0 * h);
                if w_right - centered.abs() >= 0.0 && w_left - centered.abs() >= 0.0 {
                    w_right += centered;
                    w_left -= centered;
                } else if b[k] > 0.0 {
                    w_right += b[k] / h;
                } else {
                    w_left -= b[k] / h;
                }
                diag -= w_left + w_right;
                push_interior(grid, &mut row, right, w_right);
                push_interior(grid, &mut row, left, w_left);
            }
            if dim == 2 {
                mixed_terms(cf, grid, t, idx, &mut row);
            }
            row.push((idx, diag));
            row
        })
        .collect();
    Csr::from_rows(rows)
}

fn push_interior(grid: &SpaceGrid, row: &mut Vec<(usize, f64)>, col: usize, val: f64) {
    if !grid.is_boundary(col) && val != 0.0 {
        row.push((col, val));
    }
}

fn mixed_terms(cf: &CoefficientField, grid: &SpaceGrid, t: f64, idx: usize, row: &mut Vec<(usize, f64)>) {
    // only the constant preset carries off-diagonal entries
    if !matches!(cf.preset, crate::model::Preset::Constant { .. }) {
        return;
    }
    let off = |p: &Point| cf.a(t, p)[0][1];
    let x = grid.coord(idx);
    let (hx, hy) = (grid.h[0], grid.h[1]);
    let at = |dx: f64, dy: f64| off(&[x[0] + dx * hx, x[1] + dy * hy]);
    let scale = 0.5 / (4.0 * hx * hy);
    let corners = [
        (1isize, 1isize, at(1.0, 0.0) + at(0.0, 1.0)),
        (1, -1, -(at(1.0, 0.0) + at(0.0, -1.0))),
        (-1, 1, -(at(-1.0, 0.0) + at(0.0, 1.0))),
        (-1, -1, at(-1.0, 0.0) + at(0.0, -1.0)),
    ];
    for (dx, dy, w) in corners {
        let col = grid
            .neighbour(idx, 0, dx)
            .and_then(|c| grid.neighbour(c, 1, dy))
            .expect("interior node has diagonal neighbours");
        push_interior(grid, row, col, scale * w);
    }
}

/// Largest `|L_ii|` over the grid at time `t`.
pub fn max_diagonal(op: &Csr) -> f64 {
    op.diag().iter().fold(0.0f64, |m, v| m.max(v.abs()))
}
