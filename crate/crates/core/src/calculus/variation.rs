use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sample::{Clock, FunctionalSample};
use crate::error::{invalid, Error, Result};
use crate::model::{CoefficientField, Partition, Point};
use crate::paths::{PathEnsemble, ReversedEnsemble};
use crate::report::BoundReport;
use crate::stats::{bonferroni_z, linear_fit, mean_se, mean_var, sigma_level};

/// Realized quadratic and total variation of one functional along a partition ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QVReport {
    pub label: String,
    pub meshes: Vec<f64>,
    /// Per partition: mean, standard deviation and standard error over paths of `sum |dA|^2`.
    pub qv_mean: Vec<f64>,
    pub qv_std: Vec<f64>,
    pub qv_se: Vec<f64>,
    /// Per partition: mean over paths of `sum |dA|`.
    pub tv_mean: Vec<f64>,
    pub tv_se: Vec<f64>,
    /// Slope of `ln QV` against `-ln mesh`; `-1` for a smooth functional, `0` for a martingale.
    pub qv_slope: f64,
    pub qv_slope_se: f64,
    /// Same for total variation; `0` for bounded variation, `1/2` for Brownian roughness.
    pub tv_slope: f64,
    pub tv_slope_se: f64,
}

/// Local step indices of partition points on a forward ensemble.
pub(crate) fn partition_indices(p: &Partition, e: &PathEnsemble) -> Result<Vec<usize>> {
    p.times
        .iter()
        .map(|t| match e.grid.exact_time_index(*t) {
            Some(g) if g >= e.first && g <= e.first + e.steps => Ok(g - e.first),
            _ => Err(Error::InvalidInput(format!(
                "partition time {t} is not a sampling time of the ensemble"
            ))),
        })
        .collect()
}

fn slope(meshes: &[f64], ys: &[f64]) -> (f64, f64) {
    let (xs, ls): (Vec<f64>, Vec<f64>) = meshes
        .iter()
        .zip(ys)
        .filter(|(_, y)| **y > 0.0)
        .map(|(m, y)| (-m.ln(), y.ln()))
        .unzip();
    if xs.len() < 2 {
        return (f64::NAN, f64::INFINITY);
    }
    let (s, _, se) = linear_fit(&xs, &ls);
    (s, se)
}

/// Realized `sum |A_{t_{i+1}} - A_{t_i}|^2` for every partition, with fitted decay slopes.
pub fn quadratic_variation(a: &FunctionalSample, partitions: &[Partition], e: &PathEnsemble) -> Result<QVReport> {
    if a.n_paths != e.n_paths || a.steps != e.steps {
        return Err(Error::Mismatch(format!(
            "sample '{}' does not match the ensemble",
            a.label
        )));
    }
    let a = if a.clock == Clock::Reversed {
        a.to_forward()
    } else {
        a.clone()
    };
    let active: Vec<usize> = a.active_paths().collect();
    variation_ladder(&a.label, partitions, e, &active, |j, u, t| a.between(j, u, t))
}

/// Variation ladder of a partition-dependent increment `increment(path, u, t)` between local
/// step indices `u < t`.
pub(crate) fn variation_ladder(
    label: &str,
    partitions: &[Partition],
    e: &PathEnsemble,
    paths: &[usize],
    increment: impl Fn(usize, usize, usize) -> f64 + Sync,
) -> Result<QVReport> {
    if partitions.is_empty() {
        return invalid("quadratic variation needs at least one partition");
    }
    let mut report = QVReport {
        label: label.to_string(),
        meshes: Vec::new(),
        qv_mean: Vec::new(),
        qv_std: Vec::new(),
        qv_se: Vec::new(),
        tv_mean: Vec::new(),
        tv_se: Vec::new(),
        qv_slope: f64::NAN,
        qv_slope_se: f64::INFINITY,
        tv_slope: f64::NAN,
        tv_slope_se: f64::INFINITY,
    };
    for p in partitions {
        let idx = partition_indices(p, e)?;
        let (qv, tv): (Vec<f64>, Vec<f64>) = paths
            .par_iter()
            .map(|&j| {
                idx.windows(2).fold((0.0, 0.0), |(q, v), w| {
                    let d = increment(j, w[0], w[1]);
                    (q + d * d, v + d.abs())
                })
            })
            .unzip();
        let (m, var) = mean_var(&qv);
        let (_, se) = mean_se(&qv);
        let (tm, tse) = mean_se(&tv);
        report.meshes.push(p.mesh);
        report.qv_mean.push(m);
        report.qv_std.push(var.sqrt());
        report.qv_se.push(se);
        report.tv_mean.push(tm);
        report.tv_se.push(tse);
    }
    (report.qv_slope, report.qv_slope_se) = slope(&report.meshes, &report.qv_mean);
    (report.tv_slope, report.tv_slope_se) = slope(&report.meshes, &report.tv_mean);
    Ok(report)
}

fn covariation_report(
    name: &str,
    parts: &[FunctionalSample],
    cf: &CoefficientField,
    n_paths: usize,
    steps: usize,
    tau: f64,
    state: impl Fn(usize, usize) -> (f64, Point),
) -> Result<BoundReport> {
    let d = cf.dim;
    if parts.len() != d || parts.iter().any(|p| p.n_paths != n_paths || p.steps != steps) {
        return Err(Error::Mismatch("components do not match the ensemble".into()));
    }
    let z_limit = 3.0;
    let mut report = BoundReport::new(name, 0.0, 0.0, z_limit, true);
    let active: Vec<usize> = (0..n_paths)
        .filter(|j| parts.iter().all(|p| !p.flagged.contains(j)))
        .collect();
    let mut worst: f64 = 0.0;
    for i in 0..d {
        for k in i..d {
            let (realized, expected): (Vec<f64>, Vec<f64>) = active
                .iter()
                .map(|&j| {
                    (0..steps).fold((0.0, 0.0), |(r, x), step| {
                        let (t, pt) = state(j, step);
                        (
                            r + parts[i].increment(j, step) * parts[k].increment(j, step),
                            x + cf.a(t, &pt)[i][k] * tau,
                        )
                    })
                })
                .unzip();
            let diff: Vec<f64> = realized.iter().zip(&expected).map(|(r, x)| r - x).collect();
            let (dm, dse) = mean_se(&diff);
            let (rm, _) = mean_se(&realized);
            let (em, _) = mean_se(&expected);
            let z = if dse > 0.0 {
                dm / dse
            } else if dm == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z.abs());
            report = report
                .with(format!("realized{i}{k}"), rm)
                .with(format!("expected{i}{k}"), em)
                .with(format!("z{i}{k}"), z);
        }
    }
    report.statistic = worst;
    report.pass = worst < z_limit;
    Ok(report)
}

/// Terminal realized covariation `sum dM^i dM^j` against path-wise `int a_ij(theta, X_theta) dtheta`;
/// the statistic is the largest |z| over entries, passing below 3.
pub fn covariation_check(m: &[FunctionalSample], cf: &CoefficientField, e: &PathEnsemble) -> Result<BoundReport> {
    if m.iter().any(|p| p.clock != Clock::Forward) {
        return invalid("forward covariation needs forward-clock samples");
    }
    covariation_report("covariation", m, cf, e.n_paths, e.steps, e.grid.tau, |j, k| {
        (e.time(k), e.point(j, k))
    })
}

/// The same check for reversed-clock samples against `int a(theta_bar, X_bar) dtheta`.
pub fn reversed_covariation_check(
    n: &[FunctionalSample],
    cf: &CoefficientField,
    r: &ReversedEnsemble,
) -> Result<BoundReport> {
    if n.iter().any(|p| p.clock != Clock::Reversed) {
        return invalid("reversed covariation needs reversed-clock samples");
    }
    covariation_report("reversed covariation", n, cf, r.n_paths, r.steps, r.grid.tau, |j, k| {
        (r.time(k), r.point(j, k))
    })
}

/// Number of quantile bins in the conditional-mean regression.
pub const MARTINGALE_BINS: usize = 20;

/// Binned regression of `A_t - A_u` on a per-path state observed at `u`: every bin mean must
/// be zero within a Bonferroni-corrected 3-sigma band. Works on either clock.
pub fn martingale_test(a: &FunctionalSample, states: &[f64], u: usize, t: usize) -> Result<BoundReport> {
    if states.len() != a.n_paths {
        return Err(Error::Mismatch("one state per path is required".into()));
    }
    if !(u < t && t <= a.steps) {
        return invalid(format!("need u < t <= steps, got u={u}, t={t}"));
    }
    let mut rows: Vec<(f64, f64)> = a.active_paths().map(|j| (states[j], a.between(j, u, t))).collect();
    if rows.len() < 2 * MARTINGALE_BINS {
        return invalid("too few paths for the binned regression");
    }
    rows.sort_by(|x, y| x.0.total_cmp(&y.0));
    let z_limit = bonferroni_z(sigma_level(3.0), MARTINGALE_BINS);
    let mut worst: f64 = 0.0;
    let chunk = rows.len().div_ceil(MARTINGALE_BINS);
    let mut report = BoundReport::new(format!("martingale[{}]", a.label), 0.0, 0.0, z_limit, true);
    for (b, bin) in rows.chunks(chunk).enumerate() {
        let inc: Vec<f64> = bin.iter().map(|r| r.1).collect();
        let (m, se) = mean_se(&inc);
        let z = if se > 0.0 { m / se } else { 0.0 };
        worst = worst.max(z.abs());
        report = report
            .with(format!("bin{b:02}.mean"), m)
            .with(format!("bin{b:02}.z"), z);
    }
    report.statistic = worst;
    report.pass = worst < z_limit;
    Ok(report)
}
