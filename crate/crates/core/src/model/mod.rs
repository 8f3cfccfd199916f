//! Operator data, weights, grids and partitions shared by every other module.

mod coefficients;
mod grid;
mod weight;

pub use coefficients::{
    invert, probe_directions, sym_eigen, sym_sqrt, validate_ellipticity, CoefficientField, Preset, ValidationReport,
};
pub use grid::{
    dot, dyadic_partition, dyadic_partitions, mat_vec, norm2, point, Mat2, Partition, Point, SpaceGrid, SpaceTimeGrid,
    Stencil, MAX_DIM,
};
pub use weight::{truncation_radius, weighted_norm, weighted_norm_range, weighted_space_norm, Weight};
