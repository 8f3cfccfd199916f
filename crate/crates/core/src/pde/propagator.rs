//! Theta-scheme time stepping: backward Cauchy steps and their exact adjoints.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::linear::LinearSystem;
use super::operator::{assemble, max_diagonal, Csr};
use crate::error::{invalid, Error, Result};
use crate::model::{CoefficientField, SpaceTimeGrid};

/// Time discretization. `theta = 1` is implicit Euler, `theta = 0.5` Crank-Nicolson.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scheme {
    pub theta: f64,
}

impl Default for Scheme {
    fn default() -> Self {
        Self::IMPLICIT
    }
}

impl Scheme {
    pub const IMPLICIT: Self = Self { theta: 1.0 };
    pub const CRANK_NICOLSON: Self = Self { theta: 0.5 };

    pub fn label(&self) -> String {
        format!("theta={}", self.theta)
    }
}

/// Matrices of one step `t_n -> t_{n+1}`: `implicit = I - theta tau (L_n - c)`,
/// `explicit = I + (1 - theta) tau (L_{n+1} - c)`.
#[derive(Debug)]
pub struct StepOperator {
    implicit: LinearSystem,
    implicit_t: LinearSystem,
    explicit: Option<Csr>,
    explicit_t: Option<Csr>,
}

impl StepOperator {
    /// Backward step `u^n = A^{-1} (B u^{n+1} + tau load)`.
    pub fn backward(&self, u_next: &[f64], load: Option<(&[f64], f64)>) -> Result<Vec<f64>> {
        let mut rhs = match &self.explicit {
            Some(b) => b.matvec(u_next),
            None => u_next.to_vec(),
        };
        if let Some((load, tau)) = load {
            for (r, l) in rhs.iter_mut().zip(load) {
                *r += tau * l;
            }
        }
        self.implicit.solve(&rhs)
    }

    /// Adjoint step `m^{n+1} = B^T A^{-T} m^n`, pushing node masses forward in time.
    pub fn forward(&self, mass: &[f64]) -> Result<Vec<f64>> {
        let y = self.implicit_t.solve(mass)?;
        Ok(match &self.explicit_t {
            Some(bt) => bt.matvec(&y),
            None => y,
        })
    }
}

/// Builds step operators for a coefficient field on a space-time grid, with an optional
/// killing rate `c` (used by the resolvent).
#[derive(Debug)]
pub struct Propagator {
    pub cf: CoefficientField,
    pub grid: SpaceTimeGrid,
    pub scheme: Scheme,
    pub killing: f64,
    homogeneous: Option<Arc<StepOperator>>,
}

impl Propagator {
    pub fn new(cf: &CoefficientField, grid: &SpaceTimeGrid, scheme: Scheme) -> Result<Self> {
        Self::with_killing(cf, grid, scheme, 0.0)
    }

    pub fn with_killing(cf: &CoefficientField, grid: &SpaceTimeGrid, scheme: Scheme, killing: f64) -> Result<Self> {
        if !(scheme.theta > 0.0 && scheme.theta <= 1.0) {
            return invalid(format!("theta must lie in (0, 1], got {}", scheme.theta));
        }
        if cf.dim != grid.dim() {
            return invalid("coefficient and grid dimensions differ");
        }
        if !(killing >= 0.0) {
            return invalid(format!("killing rate must be nonnegative, got {killing}"));
        }
        let mut out = Self {
            cf: cf.clone(),
            grid: *grid,
            scheme,
            killing,
            homogeneous: None,
        };
        out.check_stability()?;
        if cf.is_time_homogeneous() {
            out.homogeneous = Some(Arc::new(out.build(0)?));
        }
        Ok(out)
    }

    /// Positivity bound `tau <= 1 / ((1 - theta) max |L_ii - c|)` for explicit parts.
    pub fn stability_bound(&self) -> f64 {
        if self.scheme.theta >= 1.0 {
            return f64::INFINITY;
        }
        let steps: Vec<usize> = if self.cf.is_time_homogeneous() {
            vec![0]
        } else {
            (0..=self.grid.nt).collect()
        };
        let worst = steps
            .iter()
            .map(|&n| max_diagonal(&assemble(&self.cf, &self.grid.space, self.grid.time(n))) + self.killing)
            .fold(0.0f64, f64::max);
        1.0 / ((1.0 - self.scheme.theta) * worst)
    }

    fn check_stability(&self) -> Result<()> {
        let bound = self.stability_bound();
        if self.grid.tau > bound {
            return Err(Error::Stability {
                scheme: self.scheme.label(),
                tau: self.grid.tau,
                bound,
            });
        }
        Ok(())
    }

    /// Key under which the step operator of step `n` can be cached.
    pub fn time_key(&self, n: usize) -> usize {
        if self.homogeneous.is_some() {
            0
        } else {
            n
        }
    }

    fn build(&self, n: usize) -> Result<StepOperator> {
        let tau = self.grid.tau;
        let theta = self.scheme.theta;
        let space = &self.grid.space;
        let l_now = assemble(&self.cf, space, self.grid.time(n));
        let implicit = l_now.affine(1.0 + theta * tau * self.killing, -theta * tau);
        let explicit = (theta < 1.0).then(|| {
            let l_next = if self.cf.is_time_homogeneous() {
                l_now.clone()
            } else {
                assemble(&self.cf, space, self.grid.time(n + 1))
            };
            l_next.affine(1.0 - (1.0 - theta) * tau * self.killing, (1.0 - theta) * tau)
        });
        Ok(StepOperator {
            implicit_t: LinearSystem::new(implicit.transpose()),
            implicit: LinearSystem::new(implicit),
            explicit_t: explicit.as_ref().map(Csr::transpose),
            explicit,
        })
    }

    /// Step operator for `t_n -> t_{n+1}`.
    pub fn step(&self, n: usize) -> Result<Arc<StepOperator>> {
        match &self.homogeneous {
            Some(op) => Ok(Arc::clone(op)),
            None => self.build(n).map(Arc::new),
        }
    }

    /// One-step transition probabilities out of `node` at step `n`: row `node` of `A^{-1} B`.
    pub fn transition_row(&self, n: usize, node: usize) -> Result<Vec<f64>> {
        let mut unit = vec![0.0; self.grid.space.len()];
        unit[node] = 1.0;
        self.step(n)?.forward(&unit)
    }
}
