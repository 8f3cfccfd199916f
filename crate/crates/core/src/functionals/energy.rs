use serde::{Deserialize, Serialize};

use crate::calculus::FunctionalSample;
use crate::error::{invalid, Error, Result};
use crate::model::{SpaceGrid, Weight};
use crate::paths::PathEnsemble;
use crate::stats::{linear_fit, mean_se};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyVerdict {
    Finite,
    Zero,
    Inconclusive,
}

/// Energy ladder `v(h) = h^{-1} int_0^{T-h} int rho^2(x) E_{s,x} A_{s,s+h} B_{s,s+h} dx ds` over a set of `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub h: Vec<f64>,
    pub values: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Fitted exponent `kappa` in `v(h) ~ h^kappa`.
    pub exponent: f64,
    pub exponent_se: f64,
    /// Linear extrapolation of the ladder to `h = 0`.
    pub limit: f64,
    pub limit_se: f64,
    pub verdict: EnergyVerdict,
}

/// `int rho^2 dx` over the box, by nodal quadrature.
pub fn squared_weight_mass(space: &SpaceGrid, w: &Weight) -> f64 {
    let sq = w.pow(2.0);
    (0..space.len())
        .map(|i| space.quad_weight(i) * sq.eval(&space.coord(i)))
        .sum()
}

/// Energy ladder of the pair `(A, B)`, given per-start samples from starts on a uniform lattice
/// (see [`crate::paths::lattice_starts`]).
///
/// The `x`-integral is a quadrature with weights proportional to `rho^2` at the starts, so the
/// error bar carries path noise only. The `s`-integral is `T - h` times the value at the common
/// start time, which is exact for time-homogeneous coefficients.
pub fn energy(
    a: &[FunctionalSample],
    b: &[FunctionalSample],
    ensembles: &[PathEnsemble],
    w: &Weight,
    h_steps: &[usize],
) -> Result<EnergyEstimate> {
    if h_steps.len() < 3 {
        return invalid(format!(
            "energy ladder needs at least 3 values of h, got {}",
            h_steps.len()
        ));
    }
    if a.len() != ensembles.len() || b.len() != ensembles.len() || ensembles.is_empty() {
        return Err(Error::Mismatch("one sample pair per start is required".into()));
    }
    let grid = ensembles[0].grid;
    let mass = squared_weight_mass(&grid.space, w);
    let sq = w.pow(2.0);
    let raw: Vec<f64> = ensembles.iter().map(|e| sq.eval(&e.source)).collect();
    let total: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|r| mass * r / total).collect();
    let horizon = grid.horizon;
    let mut est = EnergyEstimate {
        h: Vec::new(),
        values: Vec::new(),
        standard_errors: Vec::new(),
        exponent: f64::NAN,
        exponent_se: f64::INFINITY,
        limit: f64::NAN,
        limit_se: f64::INFINITY,
        verdict: EnergyVerdict::Inconclusive,
    };
    let mut h_steps = h_steps.to_vec();
    h_steps.sort_unstable();
    for &hs in &h_steps {
        if hs == 0 {
            return invalid("h must be at least one step");
        }
        let h = hs as f64 * grid.tau;
        let (mut m, mut var) = (0.0, 0.0);
        for (((sa, sb), e), wt) in a.iter().zip(b).zip(ensembles).zip(&weights) {
            if hs > e.steps || sa.steps != e.steps || sb.steps != e.steps {
                return invalid(format!("h = {h} exceeds the sampled horizon"));
            }
            let prods: Vec<f64> = sa
                .active_paths()
                .filter(|j| !sb.flagged.contains(j))
                .map(|j| sa.between(j, 0, hs) * sb.between(j, 0, hs))
                .collect();
            if e.source_time() > horizon - h + 1e-12 {
                return invalid(format!("start time {} leaves no room for h = {h}", e.source_time()));
            }
            let (pm, pse) = mean_se(&prods);
            m += wt * pm;
            var += (wt * pse).powi(2);
        }
        est.h.push(h);
        est.values.push(m * (horizon - h) / h);
        est.standard_errors.push(var.sqrt() * (horizon - h) / h);
    }
    let positive: Vec<(f64, f64)> = est
        .h
        .iter()
        .zip(&est.values)
        .filter(|(_, v)| **v > 0.0)
        .map(|(h, v)| (h.ln(), v.ln()))
        .collect();
    if positive.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
        let (k, _, se) = linear_fit(&xs, &ys);
        est.exponent = k;
        est.exponent_se = se;
    }
    est.limit = linear_fit(&est.h, &est.values).1;
    est.limit_se = est.standard_errors.iter().cloned().fold(0.0, f64::max);
    let smallest = est.values[0];
    let smallest_se = est.standard_errors[0];
    est.verdict = if est.exponent > 0.5 || est.values.iter().all(|v| *v == 0.0) {
        EnergyVerdict::Zero
    } else if est.exponent.abs() < 0.25 && smallest > 3.0 * smallest_se {
        EnergyVerdict::Finite
    } else {
        EnergyVerdict::Inconclusive
    };
    Ok(est)
}
