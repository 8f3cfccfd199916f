//! Weak solver for the backward Cauchy problem, fundamental solution, resolvent and
//! a priori and Gaussian-bound estimates.

mod cauchy;
mod data;
mod estimates;
mod kernel;
pub mod linear;
pub mod operator;
mod propagator;

pub use cauchy::{resolvent, resolvent_via_kernel, solve_cauchy};
pub use data::{DistributionData, WeakSolution};
pub use estimates::{check_apriori, check_aronson, APRIORI_CONSTANT};
pub use kernel::{fundamental_solution, DeltaShape, KernelOptions, TransitionKernel, SCORE_FLOOR};
pub use propagator::{Propagator, Scheme, StepOperator};
