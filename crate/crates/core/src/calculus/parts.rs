use rayon::prelude::*;

use super::sample::{Clock, FunctionalSample};
use crate::error::{Error, Result};
use crate::model::{invert, mat_vec, CoefficientField, Mat2, Point};
use crate::paths::PathEnsemble;
use crate::pde::TransitionKernel;

/// The kernel score is replaced by the Gaussian surrogate while the kernel's standard
/// deviation is below this many grid spacings.
pub const SURROGATE_SPREAD: f64 = 2.0;

/// Forward martingale `M`, backward martingale `N` (reversed clock), the density drift `alpha`,
/// the drift integral `beta`, and the driving Brownian motion `B`, one sample per axis.
#[derive(Debug, Clone)]
pub struct Parts {
    pub m: Vec<FunctionalSample>,
    pub n: Vec<FunctionalSample>,
    pub alpha: Vec<FunctionalSample>,
    pub beta: Vec<FunctionalSample>,
    pub b: Vec<FunctionalSample>,
    /// Path points where the kernel score was clamped.
    pub clamped_visits: usize,
}

impl Parts {
    pub fn dim(&self) -> usize {
        self.m.len()
    }

    /// Increment of `N_{s, T+s-t_{k+1}} - N_{s, T+s-t_k}` for forward step `k`.
    pub fn n_step(&self, axis: usize, path: usize, k: usize) -> f64 {
        let n = &self.n[axis];
        let s = n.steps;
        n.value(path, s - k - 1) - n.value(path, s - k)
    }
}

struct ScoreModel<'a> {
    kernel: &'a TransitionKernel,
    /// Per slice: inverse kernel covariance when the surrogate applies.
    surrogate: Vec<Option<Mat2>>,
}

impl<'a> ScoreModel<'a> {
    fn new(kernel: &'a TransitionKernel) -> Self {
        let g = kernel.grid();
        let d = g.dim();
        let h = g.space.h[..d].iter().fold(0.0f64, |a, v| a.max(*v));
        let surrogate_below = SURROGATE_SPREAD * h;
        let surrogate = (kernel.first()..=g.nt)
            .map(|k| {
                let cov = kernel.covariance(k);
                let spread = (0..d).map(|i| cov[i][i]).fold(0.0f64, f64::max).sqrt();
                if spread < surrogate_below {
                    invert(d, &cov).ok()
                } else {
                    None
                }
            })
            .collect();
        Self { kernel, surrogate }
    }

    /// Score at slice `k` and point `y`; `None` flags a clamped cell.
    fn score(&self, k: usize, y: &Point) -> Option<Point> {
        let d = self.kernel.grid().dim();
        if let Some(inv) = self.surrogate[k - self.kernel.first()] {
            let mean = self.kernel.mean(k);
            let mut diff = [0.0; 2];
            for c in 0..d {
                diff[c] = mean[c] - y[c];
            }
            return Some(mat_vec(d, &inv, &diff));
        }
        let slice = self.kernel.p.slice(k);
        let floor = crate::pde::SCORE_FLOOR * slice.iter().fold(0.0f64, |a, v| a.max(*v));
        if self.kernel.density(k, y) <= floor {
            return None;
        }
        Some(self.kernel.score_at(k, y))
    }
}

/// Splits the coordinate process into its forward and backward pieces.
///
/// `M` is the coordinate minus its one-step conditional mean (a martingale by construction);
/// `alpha` integrates `1/2 a p^{-1} grad p` with trapezoid sums, using a Gaussian surrogate
/// of the score while the kernel is narrower than the grid can resolve; `N` follows from
/// `dX = 1/2 dM + 1/2 dN - d alpha + d beta` and is stored on the reversed clock.
pub fn extract_parts(e: &PathEnsemble, kernel: &TransitionKernel, cf: &CoefficientField) -> Result<Parts> {
    let grid = e.grid;
    if kernel.grid() != grid || kernel.first() != e.first || grid.space.nearest(&e.source) != Some(kernel.source_node) {
        return Err(Error::Mismatch(
            "kernel source does not match the ensemble source".into(),
        ));
    }
    if e.steps == 0 {
        return Err(Error::InvalidInput("ensemble has no steps".into()));
    }
    let d = grid.dim();
    let tau = grid.tau;
    let scores = ScoreModel::new(kernel);
    let steps = e.steps;

    // per path, per step, per axis: dM, dalpha, dbeta, dB
    let per_path: Vec<(Vec<[f64; 8]>, usize)> = (0..e.n_paths)
        .into_par_iter()
        .map(|j| {
            let mut rows = Vec::with_capacity(steps);
            let mut clamped = 0;
            let half_drift = |k: usize, x: &Point, clamped: &mut usize| -> Point {
                match scores.score(e.first + k, x) {
                    Some(s) => {
                        let v = mat_vec(d, &cf.a(e.time(k), x), &s);
                        [0.5 * v[0], 0.5 * v[1]]
                    }
                    None => {
                        *clamped += 1;
                        [0.0; 2]
                    }
                }
            };
            let mut prev_half = [0.0; 2];
            for k in 0..steps {
                let x = e.point(j, k);
                let dx = e.increment(j, k);
                let drift = e.step_drift(j, k);
                let xn = e.point(j, k + 1);
                let mut row = [0.0; 8];
                let next_half = half_drift(k + 1, &xn, &mut clamped);
                let dalpha: Point = if k == 0 {
                    // first step: Gaussian surrogate integrated against the linear bridge
                    let g = e.first + 1;
                    let inv = invert(d, &kernel.covariance(g)).unwrap_or([[0.0; 2]; 2]);
                    let mean = kernel.mean(g);
                    let mut diff = [0.0; 2];
                    for c in 0..d {
                        diff[c] = mean[c] - xn[c];
                    }
                    let v = mat_vec(d, &cf.a(e.time(0), &x), &mat_vec(d, &inv, &diff));
                    [0.5 * tau * v[0], 0.5 * tau * v[1]]
                } else {
                    [
                        0.5 * tau * (prev_half[0] + next_half[0]),
                        0.5 * tau * (prev_half[1] + next_half[1]),
                    ]
                };
                prev_half = next_half;
                let b = cf.b(e.time(k), &x);
                let sigma_inv = cf.sigma_inv(e.time(k), &x).unwrap_or([[f64::NAN; 2]; 2]);
                let mut dm = [0.0; 2];
                for c in 0..d {
                    dm[c] = dx[c] - drift[c];
                }
                let db = mat_vec(d, &sigma_inv, &dm);
                for c in 0..d {
                    row[c] = dm[c];
                    row[2 + c] = dalpha[c];
                    row[4 + c] = b[c] * tau;
                    row[6 + c] = db[c];
                }
                rows.push(row);
            }
            (rows, clamped)
        })
        .collect();
    let clamped_visits = per_path.iter().map(|(_, c)| c).sum();
    let take = |slot: usize, label: String| {
        FunctionalSample::from_increments(label, e.n_paths, steps, |j, k| per_path[j].0[k][slot])
    };
    let mut parts = Parts {
        m: Vec::new(),
        n: Vec::new(),
        alpha: Vec::new(),
        beta: Vec::new(),
        b: Vec::new(),
        clamped_visits,
    };
    for c in 0..d {
        parts.m.push(take(c, format!("M{c}")));
        parts.alpha.push(take(2 + c, format!("alpha{c}")));
        parts.beta.push(take(4 + c, format!("beta{c}")));
        parts.b.push(take(6 + c, format!("B{c}")));
        // dN_rev = dX + dA + 2 dalpha - 2 dbeta with dA = dX - dM
        let n_rev = |j: usize, k: usize| {
            let r = &per_path[j].0[k];
            let dx = e.increment(j, k)[c];
            dx + (dx - r[c]) + 2.0 * r[2 + c] - 2.0 * r[4 + c]
        };
        let mut n = FunctionalSample::from_increments(format!("N{c}"), e.n_paths, steps, |j, i| {
            // reversed index i covers forward step steps-1-i, with N_{v_{i+1}} - N_{v_i} = -dN_rev
            -n_rev(j, steps - 1 - i)
        });
        n.clock = Clock::Reversed;
        parts.n.push(n);
    }
    for c in 0..d {
        if !parts.b[c].flagged.is_empty() {
            return Err(Error::Singular("sigma is not invertible along some path".into()));
        }
    }
    Ok(parts)
}
