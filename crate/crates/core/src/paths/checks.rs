use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sampler::{PathEnsemble, StepKernels};
use crate::error::{invalid, Result};
use crate::field::SpaceTimeField;
use crate::model::{norm2, Point, SpaceGrid, Weight};
use crate::report::BoundReport;
use crate::stats::{mean_se, trapezoid_weight};

/// Battery ratios are accepted when their spread (max / min) stays below this factor.
pub const SPREAD_LIMIT: f64 = 10.0;

/// `E sup_t |X_t|^p` per path ensemble, as `(mean, standard error)`.
pub fn sup_moment(e: &PathEnsemble, p_exp: f64) -> (f64, f64) {
    let d = e.dim();
    let sups: Vec<f64> = (0..e.n_paths)
        .map(|j| {
            (0..=e.steps)
                .map(|k| norm2(d, &e.point(j, k)))
                .fold(0.0f64, f64::max)
                .powf(p_exp)
        })
        .collect();
    mean_se(&sups)
}

/// `E sup |X_t|^p / (1 + |x|)^p` over a set of starts; passes when the ratio spread stays
/// below [`SPREAD_LIMIT`].
pub fn moment_check(ensembles: &[PathEnsemble], p_exp: f64) -> Result<BoundReport> {
    if !(p_exp >= 1.0) {
        return invalid(format!("moment exponent must be at least 1, got {p_exp}"));
    }
    if ensembles.is_empty() {
        return invalid("moment check needs at least one start");
    }
    let mut report = BoundReport::new("moments", 0.0, SPREAD_LIMIT, 0.0, true);
    let mut ratios = Vec::with_capacity(ensembles.len());
    for (i, e) in ensembles.iter().enumerate() {
        let (m, se) = sup_moment(e, p_exp);
        let ratio = m / (1.0 + norm2(e.dim(), &e.source)).powf(p_exp);
        report = report
            .with(format!("start{i}.x"), e.source[0])
            .with(format!("start{i}.moment"), m)
            .with(format!("start{i}.se"), se)
            .with(format!("start{i}.ratio"), ratio);
        ratios.push(ratio);
    }
    let max = ratios.iter().fold(0.0f64, |a, v| a.max(*v));
    let min = ratios.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    let spread = if min > 0.0 {
        max / min
    } else if max == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    report.statistic = spread;
    report.pass = spread < SPREAD_LIMIT;
    Ok(report.with("max_ratio", max).with("min_ratio", min))
}

/// Interior nodes drawn with probability proportional to `rho`, returned as coordinates.
pub fn weighted_starts(space: &SpaceGrid, w: &Weight, count: usize, seed: u64) -> Vec<Point> {
    let interior: Vec<usize> = (0..space.len()).filter(|i| !space.is_boundary(*i)).collect();
    let mut cdf = Vec::with_capacity(interior.len());
    let mut acc = 0.0;
    for &i in &interior {
        acc += w.eval(&space.coord(i));
        cdf.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let u: f64 = rng.gen::<f64>() * acc;
            let pos = cdf.partition_point(|c| *c <= u).min(interior.len() - 1);
            space.coord(interior[pos])
        })
        .collect()
}

/// About `count` interior nodes spread evenly over the box (a square lattice in 2D).
pub fn lattice_starts(space: &SpaceGrid, count: usize) -> Vec<Point> {
    let per_axis = if space.dim == 1 {
        count
    } else {
        (count as f64).sqrt().ceil() as usize
    }
    .max(1);
    let axis_positions = |c: usize| -> Vec<usize> {
        (0..per_axis)
            .map(|i| {
                let x = space.lo[c] + (i as f64 + 0.5) * (space.hi[c] - space.lo[c]) / per_axis as f64;
                (((x - space.lo[c]) / space.h[c]).round() as usize).clamp(1, space.n - 2)
            })
            .collect()
    };
    let first = axis_positions(0);
    let mut out = Vec::new();
    if space.dim == 1 {
        for i in first {
            out.push(space.coord(space.flat_index([i, 0])));
        }
    } else {
        let second = axis_positions(1);
        for &i in &first {
            for &j in &second {
                out.push(space.coord(space.flat_index([i, j])));
            }
        }
    }
    out.dedup();
    out
}

/// `int rho(x) E_{s,x} int_s^T |psi(theta, X_theta)| dtheta dx` against `int_s^T int |psi| rho`.
/// The ensembles must start at `rho`-distributed points (see [`weighted_starts`]) at a common time.
pub fn occupation_check(ensembles: &[PathEnsemble], psi: &SpaceTimeField, w: &Weight) -> Result<BoundReport> {
    let Some(first) = ensembles.first() else {
        return invalid("occupation check needs at least one start");
    };
    let grid = first.grid;
    if psi.grid != grid {
        return invalid("psi lives on a different grid");
    }
    let space = grid.space;
    let rho_mass: f64 = (0..space.len())
        .map(|i| space.quad_weight(i) * w.eval(&space.coord(i)))
        .sum();
    let mut per_start = Vec::with_capacity(ensembles.len());
    for e in ensembles {
        let occupations: Vec<f64> = (0..e.n_paths)
            .map(|j| {
                (0..=e.steps)
                    .map(|k| trapezoid_weight(k, e.steps, grid.tau) * psi.interp(e.first + k, &e.point(j, k)).abs())
                    .sum()
            })
            .collect();
        per_start.push(mean_se(&occupations).0);
    }
    let (mean, se) = mean_se(&per_start);
    let lhs = rho_mass * mean;
    let from = first.first;
    let steps = grid.nt - from;
    let rhs: f64 = (from..=grid.nt)
        .map(|k| {
            let s = psi.slice(k);
            trapezoid_weight(k - from, steps, grid.tau)
                * (0..space.len())
                    .map(|i| space.quad_weight(i) * s[i].abs() * w.eval(&space.coord(i)))
                    .sum::<f64>()
        })
        .sum();
    let ratio = if lhs == 0.0 && rhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(BoundReport::new("occupation", ratio, 1.0, 0.0, ratio.is_finite())
        .with("lhs", lhs)
        .with("lhs_se", rho_mass * se)
        .with("rhs", rhs))
}

/// Chi-square statistic of observed one-step transitions out of `node` at local step `k`
/// against the kernel row, pooling cells with expected count below 5.
/// Returns `(statistic, degrees of freedom, observations)`.
pub fn transition_chi_square(
    e: &PathEnsemble,
    kernels: &StepKernels,
    k: usize,
    node: usize,
) -> Result<(f64, usize, usize)> {
    let row = kernels.row(e.first + k, node)?;
    let mut counts = vec![0usize; row.nodes.len()];
    let mut total = 0;
    for j in 0..e.n_paths {
        if e.node(j, k) != node {
            continue;
        }
        let next = e.node(j, k + 1);
        if let Ok(pos) = row.nodes.binary_search(&next) {
            counts[pos] += 1;
            total += 1;
        }
    }
    let mut stat = 0.0;
    let mut cells = 0usize;
    let (mut pool_obs, mut pool_exp) = (0.0, 0.0);
    let mut prev = 0.0;
    for (pos, &c) in counts.iter().enumerate() {
        let prob = (row.cdf[pos] - prev) / row.mass;
        prev = row.cdf[pos];
        pool_obs += c as f64;
        pool_exp += prob * total as f64;
        if pool_exp >= 5.0 {
            stat += (pool_obs - pool_exp).powi(2) / pool_exp;
            cells += 1;
            pool_obs = 0.0;
            pool_exp = 0.0;
        }
    }
    if pool_exp > 0.0 {
        stat += (pool_obs - pool_exp).powi(2) / pool_exp.max(1e-300);
        cells += 1;
    }
    Ok((stat, cells.saturating_sub(1), total))
}
