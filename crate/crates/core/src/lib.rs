//! Numerical laboratory for diffusions generated by divergence-form operators
//! `L_t = 1/2 div(a grad) + b . grad`.
//!
//! The diffusion is built from a gridded fundamental solution; paths are sampled
//! from its one-step kernels, and the forward/backward stochastic calculus of
//! time-dependent functionals `u(t, X_t)` is checked against grid and Monte Carlo oracles.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod calculus;
pub mod capacity;
pub mod error;
pub mod field;
pub mod functionals;
pub mod harness;
pub mod io;
pub mod model;
pub mod paths;
pub mod pde;
pub mod report;
pub mod stats;

pub use error::{Error, Result};
pub use field::{SpaceTimeField, VectorField};
pub use model::{CoefficientField, Partition, Point, Preset, SpaceGrid, SpaceTimeGrid, Weight};
pub use pde::{DistributionData, Scheme, TransitionKernel, WeakSolution};
pub use report::BoundReport;
