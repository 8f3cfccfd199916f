use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calculus::{quadratic_variation, FunctionalSample, QVReport};
use crate::error::{invalid, Error, Result};
use crate::field::{SpaceTimeField, VectorField};
use crate::model::{weighted_norm, Partition, SpaceTimeGrid, Weight};
use crate::paths::{PathEnsemble, SPREAD_LIMIT};
use crate::pde::WeakSolution;
use crate::report::BoundReport;
use crate::stats::mean_se;

/// Variation slope below which the ladder counts as a plateau.
pub const PLATEAU_SLOPE: f64 = 0.1;
/// Variation slope above which the ladder counts as growing.
pub const GROWTH_SLOPE: f64 = 0.25;
/// QV slope below which the quadratic variation counts as decaying.
pub const QV_DECAY_SLOPE: f64 = -0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemimartingaleVerdict {
    FiniteVariation,
    ZeroQvUnboundedVariation,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemimartingaleReport {
    pub verdict: SemimartingaleVerdict,
    pub ladder: QVReport,
}

/// Classifies the drift part by how its total and quadratic variation scale under refinement.
pub fn semimartingale_test(
    au: &FunctionalSample,
    partitions: &[Partition],
    e: &PathEnsemble,
) -> Result<SemimartingaleReport> {
    let ladder = quadratic_variation(au, partitions, e)?;
    let verdict = if ladder.tv_mean.iter().all(|v| *v == 0.0) || ladder.tv_slope.abs() < PLATEAU_SLOPE {
        SemimartingaleVerdict::FiniteVariation
    } else if ladder.tv_slope > GROWTH_SLOPE && ladder.qv_slope < QV_DECAY_SLOPE {
        SemimartingaleVerdict::ZeroQvUnboundedVariation
    } else {
        SemimartingaleVerdict::Inconclusive
    };
    Ok(SemimartingaleReport { verdict, ladder })
}

/// Time-independent field whose component `c` is a seeded Brownian path in coordinate `c`
/// (cumulative Gaussian increments of variance `h` along the grid), scaled by `amplitude`.
pub fn rough_vector_field(grid: SpaceTimeGrid, seed: u64, amplitude: f64) -> VectorField {
    let space = grid.space;
    let d = space.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let walks: Vec<Vec<f64>> = (0..d)
        .map(|c| {
            let mut acc = 0.0;
            let mut walk = Vec::with_capacity(space.n);
            for _ in 0..space.n {
                walk.push(acc);
                let z: f64 = StandardNormal.sample(&mut rng);
                acc += z * space.h[c].sqrt();
            }
            let mean = walk.iter().sum::<f64>() / walk.len() as f64;
            walk.iter().map(|v| amplitude * (v - mean)).collect()
        })
        .collect();
    let comps = (0..d)
        .map(|c| {
            let mut f = SpaceTimeField::zeros(grid, 0);
            for k in 0..=grid.nt {
                for (idx, v) in f.slice_mut(k).iter_mut().enumerate() {
                    *v = walks[c][space.multi_index(idx)[c]];
                }
            }
            f
        })
        .collect();
    VectorField { comps }
}

/// `||u||_{W_rho} = sup_t ||u(t)||_{2,rho} + ||grad u||_{2,rho,T}`.
pub fn solution_norm(u: &WeakSolution, w: &Weight) -> Result<f64> {
    Ok(weighted_norm(&u.u, w, 2.0, f64::INFINITY)? + weighted_norm(&u.grad_u.magnitude(), w, 2.0, 2.0)?)
}

/// `int sqrt(rho) E_{s,x} sup_t |u(t, X_t)| dx`, from ensembles started at `sqrt(rho)`-distributed
/// points at a common time.
pub fn weighted_sup_moment(u: &WeakSolution, ensembles: &[PathEnsemble], w: &Weight) -> Result<(f64, f64)> {
    let Some(first) = ensembles.first() else {
        return invalid("sup moment needs at least one start");
    };
    if u.grid() != first.grid {
        return Err(Error::Mismatch("solution and ensembles live on different grids".into()));
    }
    let space = first.grid.space;
    let root = w.pow(0.5);
    let mass: f64 = (0..space.len())
        .map(|i| space.quad_weight(i) * root.eval(&space.coord(i)))
        .sum();
    let per_start: Vec<f64> = ensembles
        .iter()
        .map(|e| {
            let sups: Vec<f64> = (0..e.n_paths)
                .map(|j| {
                    (0..=e.steps)
                        .map(|k| u.u.interp(e.first + k, &e.point(j, k)).abs())
                        .fold(0.0f64, f64::max)
                })
                .collect();
            mean_se(&sups).0
        })
        .collect();
    let (m, se) = mean_se(&per_start);
    Ok((mass * m, mass * se))
}

/// Ratio battery `E_{s, sqrt rho} sup |u(t, X_t)| / ||u||_{W_rho}`; passes when the ratios of the
/// non-trivial solutions stay within [`SPREAD_LIMIT`] of each other.
pub fn sup_moment_check(battery: &[WeakSolution], ensembles: &[PathEnsemble], w: &Weight) -> Result<BoundReport> {
    if battery.is_empty() {
        return invalid("sup moment check needs at least one solution");
    }
    let mut report = BoundReport::new("sup_moment", 0.0, SPREAD_LIMIT, 0.0, true);
    let mut ratios = Vec::new();
    for (i, u) in battery.iter().enumerate() {
        let (lhs, se) = weighted_sup_moment(u, ensembles, w)?;
        let rhs = solution_norm(u, w)?;
        report = report
            .with(format!("u{i}.lhs"), lhs)
            .with(format!("u{i}.lhs_se"), se)
            .with(format!("u{i}.norm"), rhs);
        if rhs > 0.0 {
            let r = lhs / rhs;
            report = report.with(format!("u{i}.ratio"), r);
            ratios.push(r);
        } else if lhs > 0.0 {
            return Ok(report.fail_with(format!("solution {i} has zero norm but positive sup moment")));
        }
    }
    let max = ratios.iter().fold(0.0f64, |a, v| a.max(*v));
    let min = ratios.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    let spread = if ratios.is_empty() {
        1.0
    } else if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    };
    report.statistic = spread;
    report.pass = spread < SPREAD_LIMIT;
    Ok(report
        .with("max_ratio", max)
        .with("min_ratio", if ratios.is_empty() { 0.0 } else { min }))
}
