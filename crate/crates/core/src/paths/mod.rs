//! Sampling the Markov family from one-step kernels, time reversal, and the
//! moment and occupation estimates.

mod checks;
mod sampler;

pub use checks::{
    lattice_starts, moment_check, occupation_check, sup_moment, transition_chi_square, weighted_starts, SPREAD_LIMIT,
};
pub use sampler::{sample_paths, PathEnsemble, ReversedEnsemble, StepKernels, StepRow};
