use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::{SpaceTimeField, VectorField};
use crate::model::{mat_vec, weighted_norm, CoefficientField, Point, SpaceTimeGrid, Weight};

/// Right-hand side `Phi = f0 + div fbar` of the Cauchy problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionData {
    pub f0: SpaceTimeField,
    pub fbar: VectorField,
}

impl DistributionData {
    pub fn zero(grid: SpaceTimeGrid) -> Self {
        Self {
            f0: SpaceTimeField::zeros(grid, 0),
            fbar: VectorField::zeros(grid, 0),
        }
    }

    pub fn new(f0: SpaceTimeField, fbar: VectorField) -> Result<Self> {
        if f0.grid != fbar.grid() || f0.first != 0 || fbar.comps.iter().any(|c| c.first != 0) {
            return invalid("f0 and fbar must cover the full time grid of one space-time grid");
        }
        f0.check_finite("f0")?;
        fbar.check_finite("fbar")?;
        Ok(Self { f0, fbar })
    }

    pub fn from_fns(
        grid: SpaceTimeGrid,
        f0: impl Fn(f64, &Point) -> f64,
        fbar: impl Fn(f64, &Point) -> Point,
    ) -> Result<Self> {
        Self::new(
            SpaceTimeField::from_fn(grid, 0, f0),
            VectorField::from_fn(grid, 0, fbar),
        )
    }

    pub fn grid(&self) -> SpaceTimeGrid {
        self.f0.grid
    }

    pub fn negated(&self) -> Self {
        Self {
            f0: self.f0.scaled(-1.0),
            fbar: self.fbar.scaled(-1.0),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            f0: self.f0.add(&other.f0)?,
            fbar: self.fbar.add(&other.fbar)?,
        })
    }

    pub fn is_zero(&self) -> bool {
        self.f0.max_abs() == 0.0 && self.fbar.comps.iter().all(|c| c.max_abs() == 0.0)
    }

    /// Nodal load `f0 + div fbar` on slice `k`, with the divergence taken in weak form:
    /// pairing against hat functions gives differences of face averages of `fbar`,
    /// so `fbar` itself is never differentiated pointwise. Zero on boundary nodes.
    pub fn load(&self, k: usize) -> Vec<f64> {
        let g = self.f0.grid.space;
        let f0 = self.f0.slice(k);
        (0..g.len())
            .map(|idx| {
                if g.is_boundary(idx) {
                    return 0.0;
                }
                let mut v = f0[idx];
                for (axis, comp) in self.fbar.comps.iter().enumerate() {
                    let s = comp.slice(k);
                    let left = g.neighbour(idx, axis, -1).expect("interior");
                    let right = g.neighbour(idx, axis, 1).expect("interior");
                    v += (s[right] - s[left]) / (2.0 * g.h[axis]);
                }
                v
            })
            .collect()
    }

    /// `||f0||_{2,rho,T} + ||fbar||_{2,rho,T}`, the upper bound used in place of `||Phi||_*`.
    pub fn dual_norm_bound(&self, w: &Weight) -> Result<f64> {
        Ok(weighted_norm(&self.f0, w, 2.0, 2.0)? + weighted_norm(&self.fbar.magnitude(), w, 2.0, 2.0)?)
    }
}

/// Gridded solution of `du/dt + L_t u = -Phi`, `u(T) = phi`, carried with its data so that
/// `Lu = -Phi = (-f0) + div(-fbar)` is known without inverting the operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakSolution {
    pub u: SpaceTimeField,
    pub grad_u: VectorField,
    pub data: DistributionData,
    pub terminal: Vec<f64>,
}

impl WeakSolution {
    pub fn grid(&self) -> SpaceTimeGrid {
        self.u.grid
    }

    /// The `f0` part of `Lu`.
    pub fn lu_f0(&self) -> SpaceTimeField {
        self.data.f0.scaled(-1.0)
    }

    /// The `fbar` part of `Lu`.
    pub fn lu_fbar(&self) -> VectorField {
        self.data.fbar.scaled(-1.0)
    }

    /// Closed-form `u` with known gradient and a known representation `Lu = f0 + div fbar`.
    pub fn closed_form(
        grid: SpaceTimeGrid,
        u: impl Fn(f64, &Point) -> f64,
        grad: impl Fn(f64, &Point) -> Point,
        lu_f0: impl Fn(f64, &Point) -> f64,
        lu_fbar: impl Fn(f64, &Point) -> Point,
    ) -> Result<Self> {
        let u_field = SpaceTimeField::from_fn(grid, 0, &u);
        let terminal = u_field.slice(grid.nt).to_vec();
        let lu = DistributionData::from_fns(grid, lu_f0, lu_fbar)?;
        Ok(Self {
            grad_u: VectorField::from_fn(grid, 0, grad),
            u: u_field,
            data: lu.negated(),
            terminal,
        })
    }

    /// Closed-form smooth `u` with the generic record `f0 = du/dt + b . grad u`, `fbar = a grad u / 2`.
    pub fn smooth(
        grid: SpaceTimeGrid,
        cf: &CoefficientField,
        u: impl Fn(f64, &Point) -> f64,
        grad: impl Fn(f64, &Point) -> Point + Copy,
        dt: impl Fn(f64, &Point) -> f64,
    ) -> Result<Self> {
        let d = cf.dim;
        Self::closed_form(
            grid,
            u,
            grad,
            |t, x| {
                let g = grad(t, x);
                let b = cf.b(t, x);
                dt(t, x) + (0..d).map(|i| b[i] * g[i]).sum::<f64>()
            },
            |t, x| {
                let v = mat_vec(d, &cf.a(t, x), &grad(t, x));
                [0.5 * v[0], 0.5 * v[1]]
            },
        )
    }

    /// Pointwise sum; the data records add, so `A^{u+v} = A^u + A^v`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(Self {
            u: self.u.add(&other.u)?,
            grad_u: self.grad_u.add(&other.grad_u)?,
            data: self.data.add(&other.data)?,
            terminal: self.terminal.iter().zip(&other.terminal).map(|(a, b)| a + b).collect(),
        })
    }
}
