//! Shared fixtures for the kernel benchmarks.

use divlab::calculus::{extract_parts, Parts};
use divlab::model::{CoefficientField, Point, SpaceGrid, SpaceTimeGrid};
use divlab::paths::{PathEnsemble, StepKernels};
use divlab::pde::{fundamental_solution, KernelOptions, Scheme, TransitionKernel};

pub const START: Point = [0.0, 0.0];
pub const SEED: u64 = 7;

/// Brownian coefficients on a bm-smoke sized grid.
pub struct Fixture {
    pub cf: CoefficientField,
    pub grid: SpaceTimeGrid,
    pub scheme: Scheme,
}

impl Fixture {
    pub fn new(nx: usize, nt: usize) -> Self {
        Self {
            cf: CoefficientField::identity(1),
            grid: SpaceTimeGrid::new(SpaceGrid::cube(1, -5.0, 5.0, nx).unwrap(), 1.0, nt).unwrap(),
            scheme: Scheme::CRANK_NICOLSON,
        }
    }

    pub fn kernel(&self) -> TransitionKernel {
        let options = KernelOptions {
            scheme: self.scheme,
            ..Default::default()
        };
        fundamental_solution(&self.cf, 0.0, &START, &self.grid, options).unwrap()
    }

    pub fn steps(&self) -> StepKernels {
        StepKernels::new(&self.cf, &self.grid, self.scheme).unwrap()
    }

    pub fn ensemble(&self, n_paths: usize) -> PathEnsemble {
        self.steps().sample(0.0, &START, n_paths, self.grid.nt, SEED).unwrap()
    }

    pub fn parts(&self, e: &PathEnsemble, kernel: &TransitionKernel) -> Parts {
        extract_parts(e, kernel, &self.cf).unwrap()
    }
}
