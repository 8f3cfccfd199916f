//! Test functions `u` carried with a representation of `Lu`.

use statrs::function::erf::erf;

use crate::error::Result;
use crate::model::{CoefficientField, SpaceTimeGrid};
use crate::pde::{solve_cauchy, DistributionData, Scheme, WeakSolution};

/// `u(t, x) = x_1`. Under standard Brownian coefficients `Lu = 0`.
pub fn coordinate(grid: SpaceTimeGrid, cf: &CoefficientField) -> Result<WeakSolution> {
    if cf.is_standard_brownian() {
        return WeakSolution::closed_form(grid, |_, x| x[0], |_, _| [1.0, 0.0], |_, _| 0.0, |_, _| [0.0; 2]);
    }
    WeakSolution::smooth(grid, cf, |_, x| x[0], |_, _| [1.0, 0.0], |_, _| 0.0)
}

/// `u(t, x) = x_1^2`. Under standard Brownian coefficients the record is `f0 = 1, fbar = 0`.
pub fn square(grid: SpaceTimeGrid, cf: &CoefficientField) -> Result<WeakSolution> {
    if cf.is_standard_brownian() {
        return WeakSolution::closed_form(
            grid,
            |_, x| x[0] * x[0],
            |_, x| [2.0 * x[0], 0.0],
            |_, _| 1.0,
            |_, _| [0.0; 2],
        );
    }
    WeakSolution::smooth(grid, cf, |_, x| x[0] * x[0], |_, x| [2.0 * x[0], 0.0], |_, _| 0.0)
}

/// Gaussian density with standard deviation `width`.
pub fn gaussian_density(z: f64, width: f64) -> f64 {
    (-0.5 * (z / width).powi(2)).exp() / (width * (2.0 * std::f64::consts::PI).sqrt())
}

/// `|x_1|` convolved with a Gaussian of width `width`:
/// `width * g(x / width)` with `g(z) = z erf(z / sqrt 2) + sqrt(2 / pi) exp(-z^2 / 2)`.
/// Under standard Brownian coefficients `Lu` is the Gaussian density itself.
pub fn mollified_abs(grid: SpaceTimeGrid, cf: &CoefficientField, width: f64) -> Result<WeakSolution> {
    let u = move |_: f64, x: &crate::model::Point| {
        let z = x[0] / width;
        width * (z * erf(z / std::f64::consts::SQRT_2) + (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * z * z).exp())
    };
    let grad = move |_: f64, x: &crate::model::Point| [erf(x[0] / (width * std::f64::consts::SQRT_2)), 0.0];
    if cf.is_standard_brownian() {
        return WeakSolution::closed_form(
            grid,
            u,
            grad,
            move |_, x| gaussian_density(x[0], width),
            |_, _| [0.0; 2],
        );
    }
    WeakSolution::smooth(grid, cf, u, grad, |_, _| 0.0)
}

/// Caloric `u(t, x) = E_{t,x} exp(-|X_T|^2)`: zero data, Gaussian terminal condition.
pub fn heat_caloric(cf: &CoefficientField, grid: SpaceTimeGrid, scheme: Scheme) -> Result<WeakSolution> {
    let space = grid.space;
    let phi: Vec<f64> = (0..space.len())
        .map(|i| {
            let x = space.coord(i);
            (-(0..space.dim).map(|c| x[c] * x[c]).sum::<f64>()).exp()
        })
        .collect();
    solve_cauchy(cf, &DistributionData::zero(grid), &phi, &grid, scheme)
}
