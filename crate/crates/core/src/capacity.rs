//! Monte Carlo parabolic capacity `cap_L(B) = P_m(exists t in [s, T): (t, X_t) in B)` relative
//! to the truncation box, and the measure of starts where a diagnostic fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::Point;
use crate::paths::{PathEnsemble, StepKernels};
use crate::stats::mean_se;

/// Borel sets of `[0, T) x box` supported by the hitting test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpaceTimeSet {
    Empty,
    /// `{t0} x [lo, hi]`.
    TimeSlice {
        time: f64,
        lo: Point,
        hi: Point,
    },
    /// `[t1, t2] x [lo, hi]`.
    Slab {
        from: f64,
        to: f64,
        lo: Point,
        hi: Point,
    },
    /// Parabolic cylinder `{|t - t0| <= r^2, |x - x0| <= r}` around a space-time point.
    Point {
        time: f64,
        center: Point,
        radius: f64,
    },
}

impl SpaceTimeSet {
    fn validate(&self, dim: usize, horizon: f64, lo: &Point, hi: &Point) -> Result<()> {
        let inside_box = |a: &Point, b: &Point| (0..dim).all(|c| a[c] >= lo[c] && b[c] <= hi[c] && a[c] <= b[c]);
        let ok = match self {
            Self::Empty => true,
            Self::TimeSlice { time, lo: a, hi: b } => (0.0..horizon).contains(time) && inside_box(a, b),
            Self::Slab { from, to, lo: a, hi: b } => *from >= 0.0 && from <= to && *to < horizon && inside_box(a, b),
            Self::Point { time, center, radius } => {
                *radius > 0.0
                    && *time - radius * radius >= 0.0
                    && *time + radius * radius < horizon
                    && inside_box(
                        &[center[0] - radius, center[1] - if dim == 2 { *radius } else { 0.0 }],
                        &[center[0] + radius, center[1] + if dim == 2 { *radius } else { 0.0 }],
                    )
            }
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("set {self:?} is not contained in [0, T) x box"))
        }
    }

    /// Whether the segment from `(ta, xa)` to `(tb, xb)` meets the set.
    pub fn hits_segment(&self, dim: usize, ta: f64, xa: &Point, tb: f64, xb: &Point) -> bool {
        let at = |lambda: f64| -> Point {
            let mut p = [0.0; 2];
            for c in 0..dim {
                p[c] = xa[c] + lambda * (xb[c] - xa[c]);
            }
            p
        };
        let time_window = |t1: f64, t2: f64| -> Option<(f64, f64)> {
            if tb < t1 || ta > t2 {
                return None;
            }
            let span = tb - ta;
            if span <= 0.0 {
                return Some((0.0, 0.0));
            }
            Some((((t1 - ta) / span).max(0.0), ((t2 - ta) / span).min(1.0)))
        };
        match self {
            Self::Empty => false,
            Self::TimeSlice { time, lo, hi } => {
                if *time < ta || *time > tb {
                    return false;
                }
                let lambda = if tb > ta { (time - ta) / (tb - ta) } else { 0.0 };
                let p = at(lambda);
                (0..dim).all(|c| p[c] >= lo[c] && p[c] <= hi[c])
            }
            Self::Slab { from, to, lo, hi } => {
                let Some((mut l0, mut l1)) = time_window(*from, *to) else {
                    return false;
                };
                for c in 0..dim {
                    let v = xb[c] - xa[c];
                    if v.abs() < 1e-300 {
                        if xa[c] < lo[c] || xa[c] > hi[c] {
                            return false;
                        }
                        continue;
                    }
                    let (a, b) = ((lo[c] - xa[c]) / v, (hi[c] - xa[c]) / v);
                    l0 = l0.max(a.min(b));
                    l1 = l1.min(a.max(b));
                }
                l0 <= l1
            }
            Self::Point { time, center, radius } => {
                let r2 = radius * radius;
                let Some((l0, l1)) = time_window(time - r2, time + r2) else {
                    return false;
                };
                if l0 > l1 {
                    return false;
                }
                // closest point of the segment to the center, within the time window
                let mut vv = 0.0;
                let mut wv = 0.0;
                for c in 0..dim {
                    let v = xb[c] - xa[c];
                    vv += v * v;
                    wv += (center[c] - xa[c]) * v;
                }
                let lambda = if vv > 0.0 { (wv / vv).clamp(l0, l1) } else { l0 };
                let p = at(lambda);
                (0..dim).map(|c| (p[c] - center[c]).powi(2)).sum::<f64>() <= r2
            }
        }
    }

    /// Whether the piecewise-linear interpolant of path `j` meets the set.
    pub fn hit_by(&self, e: &PathEnsemble, j: usize) -> bool {
        let d = e.dim();
        if e.steps == 0 {
            return self.hits_segment(d, e.time(0), &e.point(j, 0), e.time(0), &e.point(j, 0));
        }
        (0..e.steps).any(|k| self.hits_segment(d, e.time(k), &e.point(j, k), e.time(k + 1), &e.point(j, k + 1)))
    }
}

/// Capacity estimate relative to the truncation box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityEstimate {
    /// `|[0, T) x box| * mean hitting probability`.
    pub estimate: f64,
    pub standard_error: f64,
    pub hit_fraction: f64,
    pub box_measure: f64,
    pub starts: usize,
    pub paths_per_start: usize,
}

/// Draws `n_starts` Lebesgue-uniform starts in `[0, T) x box` (times snapped to the grid) and
/// runs `n_paths` paths from each to `T`. Equal seeds give equal starts and paths, so estimates
/// for nested sets are path-wise nested.
pub fn estimate_cap_l(
    set: &SpaceTimeSet,
    kernels: &StepKernels,
    n_starts: usize,
    n_paths: usize,
    seed: u64,
) -> Result<CapacityEstimate> {
    let grid = kernels.grid();
    let space = grid.space;
    let d = space.dim;
    set.validate(d, grid.horizon, &space.lo, &space.hi)?;
    if n_starts == 0 || n_paths == 0 {
        return invalid("capacity estimate needs at least one start and one path");
    }
    let box_measure = grid.horizon * space.box_volume();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<(usize, Point)> = (0..n_starts)
        .map(|_| {
            let k = rng.gen_range(0..grid.nt);
            let mut x = [0.0; 2];
            for c in 0..d {
                // keep clear of the killed boundary nodes
                let (a, b) = (space.lo[c] + 0.5 * space.h[c], space.hi[c] - 0.5 * space.h[c]);
                x[c] = rng.gen_range(a..b);
            }
            (k, x)
        })
        .collect();
    if matches!(set, SpaceTimeSet::Empty) {
        return Ok(CapacityEstimate {
            estimate: 0.0,
            standard_error: 0.0,
            hit_fraction: 0.0,
            box_measure,
            starts: n_starts,
            paths_per_start: n_paths,
        });
    }
    let fractions: Vec<f64> = starts
        .par_iter()
        .enumerate()
        .map(|(i, (k, x))| {
            let e = kernels.sample(grid.time(*k), x, n_paths, grid.nt - k, seed.wrapping_add(1 + i as u64))?;
            let hits = (0..n_paths).filter(|j| set.hit_by(&e, *j)).count();
            Ok(hits as f64 / n_paths as f64)
        })
        .collect::<Result<_>>()?;
    let (m, se) = mean_se(&fractions);
    Ok(CapacityEstimate {
        estimate: box_measure * m,
        standard_error: box_measure * se,
        hit_fraction: m,
        box_measure,
        starts: n_starts,
        paths_per_start: n_paths,
    })
}

/// One start of a per-start diagnostic battery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub time: f64,
    pub point: Point,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceptionReport {
    pub starts: usize,
    pub failing: usize,
    pub failing_fraction: f64,
    /// Failing fraction times the measure of the sampled region.
    pub failing_measure: f64,
    /// Sorted distinct start times of failing starts.
    pub failing_times: Vec<f64>,
}

/// Measure of failing starts, assuming the outcomes come from uniform starts over a region of
/// measure `region_measure`.
pub fn exception_report(outcomes: &[StartOutcome], region_measure: f64) -> ExceptionReport {
    let failing: Vec<&StartOutcome> = outcomes.iter().filter(|o| !o.pass).collect();
    let fraction = if outcomes.is_empty() {
        0.0
    } else {
        failing.len() as f64 / outcomes.len() as f64
    };
    let mut times: Vec<f64> = failing.iter().map(|o| o.time).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    ExceptionReport {
        starts: outcomes.len(),
        failing: failing.len(),
        failing_fraction: fraction,
        failing_measure: fraction * region_measure,
        failing_times: times,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoefficientField, SpaceGrid, SpaceTimeGrid};
    use crate::pde::Scheme;

    fn kernels_1d() -> StepKernels {
        let g = SpaceTimeGrid::new(SpaceGrid::cube(1, -3.0, 3.0, 61).unwrap(), 1.0, 64).unwrap();
        StepKernels::new(&CoefficientField::identity(1), &g, Scheme::IMPLICIT).unwrap()
    }

    #[test]
    fn segment_tests() {
        let slice = SpaceTimeSet::TimeSlice {
            time: 0.5,
            lo: [0.0, 0.0],
            hi: [1.0, 0.0],
        };
        assert!(slice.hits_segment(1, 0.4, &[-1.0, 0.0], 0.6, &[1.0, 0.0]));
        assert!(!slice.hits_segment(1, 0.4, &[-1.0, 0.0], 0.6, &[-0.5, 0.0]));
        assert!(!slice.hits_segment(1, 0.6, &[0.5, 0.0], 0.7, &[0.5, 0.0]));
        let ball = SpaceTimeSet::Point {
            time: 0.5,
            center: [0.0, 0.0],
            radius: 0.1,
        };
        // passes straight through the center in 2D
        assert!(ball.hits_segment(2, 0.495, &[-1.0, -1.0], 0.505, &[1.0, 1.0]));
        assert!(!ball.hits_segment(2, 0.495, &[-1.0, 1.0], 0.505, &[1.0, 1.0]));
        let slab = SpaceTimeSet::Slab {
            from: 0.2,
            to: 0.3,
            lo: [0.0, 0.0],
            hi: [1.0, 1.0],
        };
        assert!(slab.hits_segment(2, 0.0, &[-1.0, 0.5], 1.0, &[4.0, 0.5]));
        assert!(!slab.hits_segment(2, 0.0, &[-1.0, 0.5], 1.0, &[2.0, 0.5]));
        assert!(!slab.hits_segment(2, 0.0, &[-1.0, 0.5], 0.25, &[-0.5, 0.5]));
    }

    #[test]
    fn empty_set_has_zero_capacity() {
        let est = estimate_cap_l(&SpaceTimeSet::Empty, &kernels_1d(), 10, 5, 1).unwrap();
        assert_eq!(est.estimate, 0.0);
    }

    #[test]
    fn sets_outside_the_box_are_rejected() {
        let set = SpaceTimeSet::TimeSlice {
            time: 1.5,
            lo: [0.0, 0.0],
            hi: [1.0, 0.0],
        };
        assert!(estimate_cap_l(&set, &kernels_1d(), 10, 5, 1).is_err());
    }

    #[test]
    fn slices_of_positive_measure_have_positive_capacity_and_monotonicity_holds() {
        let k = kernels_1d();
        let small = SpaceTimeSet::TimeSlice {
            time: 0.5,
            lo: [0.0, 0.0],
            hi: [0.5, 0.0],
        };
        let large = SpaceTimeSet::TimeSlice {
            time: 0.5,
            lo: [0.0, 0.0],
            hi: [1.0, 0.0],
        };
        let a = estimate_cap_l(&small, &k, 200, 10, 3).unwrap();
        let b = estimate_cap_l(&large, &k, 200, 10, 3).unwrap();
        assert!(a.estimate > 3.0 * a.standard_error, "{a:?}");
        assert!(a.estimate <= b.estimate);
    }

    #[test]
    fn point_balls_shrink_in_two_dimensions() {
        let g = SpaceTimeGrid::new(SpaceGrid::cube(2, -2.0, 2.0, 41).unwrap(), 1.0, 64).unwrap();
        let k = StepKernels::new(&CoefficientField::identity(2), &g, Scheme::IMPLICIT).unwrap();
        let ladder: Vec<f64> = [0.2, 0.1, 0.05]
            .iter()
            .map(|r| {
                let ball = SpaceTimeSet::Point {
                    time: 0.5,
                    center: [0.0, 0.0],
                    radius: *r,
                };
                estimate_cap_l(&ball, &k, 200, 10, 11).unwrap().estimate
            })
            .collect();
        assert!(ladder[0] > 0.0);
        assert!(ladder.windows(2).all(|w| w[1] <= w[0]), "{ladder:?}");
    }

    #[test]
    fn exception_fraction() {
        let pass = StartOutcome {
            time: 0.1,
            point: [0.0; 2],
            pass: true,
        };
        assert_eq!(exception_report(&[pass; 4], 2.0).failing_measure, 0.0);
        let fail = StartOutcome { pass: false, ..pass };
        let r = exception_report(&[pass, pass, pass, fail], 2.0);
        assert_eq!(r.failing_fraction, 0.25);
        assert_eq!(r.failing_measure, 0.5);
        assert_eq!(r.failing_times, vec![0.1]);
    }
}
