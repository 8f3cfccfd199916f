use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{SpaceTimeField, VectorField};
use crate::model::Point;
use crate::paths::PathEnsemble;
use crate::stats::mean_se;

/// Direction in which a sample's index runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Clock {
    /// Index `k` is forward time `t_{first+k}`.
    Forward,
    /// Index `k` is reversed time `v_k`, i.e. forward time `t_{first+steps-k}`.
    Reversed,
}

/// Per-path process `A_{s,t}` on the sampling grid, with `values[.][0] = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSample {
    pub label: String,
    pub clock: Clock,
    pub n_paths: usize,
    pub steps: usize,
    /// `[path][k]`, flattened.
    pub values: Vec<f64>,
    /// Paths excluded because the integrand was not finite along them.
    pub flagged: Vec<usize>,
}

impl FunctionalSample {
    pub fn zeros(label: impl Into<String>, n_paths: usize, steps: usize) -> Self {
        Self {
            label: label.into(),
            clock: Clock::Forward,
            n_paths,
            steps,
            values: vec![0.0; n_paths * (steps + 1)],
            flagged: Vec::new(),
        }
    }

    /// Builds a forward sample from per-step increments `increment(path, k)` for step `k -> k+1`.
    /// Paths producing a non-finite increment are zeroed and flagged.
    pub fn from_increments(
        label: impl Into<String>,
        n_paths: usize,
        steps: usize,
        increment: impl Fn(usize, usize) -> f64 + Sync,
    ) -> Self {
        let mut out = Self::zeros(label, n_paths, steps);
        let bad: Vec<usize> = out
            .values
            .par_chunks_mut(steps + 1)
            .enumerate()
            .filter_map(|(j, row)| {
                let mut acc = 0.0;
                for k in 0..steps {
                    acc += increment(j, k);
                    row[k + 1] = acc;
                }
                if acc.is_finite() && row.iter().all(|v| v.is_finite()) {
                    None
                } else {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    Some(j)
                }
            })
            .collect();
        out.flagged = bad;
        out
    }

    pub fn value(&self, path: usize, k: usize) -> f64 {
        self.values[path * (self.steps + 1) + k]
    }

    pub fn row(&self, path: usize) -> &[f64] {
        &self.values[path * (self.steps + 1)..(path + 1) * (self.steps + 1)]
    }

    pub fn increment(&self, path: usize, k: usize) -> f64 {
        self.value(path, k + 1) - self.value(path, k)
    }

    /// `A_{u,t}` for local indices `u <= t`.
    pub fn between(&self, path: usize, u: usize, t: usize) -> f64 {
        self.value(path, t) - self.value(path, u)
    }

    pub fn active_paths(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_paths).filter(move |j| !self.flagged.contains(j))
    }

    pub fn terminal(&self) -> Vec<f64> {
        self.active_paths().map(|j| self.value(j, self.steps)).collect()
    }

    /// Mean and standard error of `A_{s, t_k}` over unflagged paths.
    pub fn mean_at(&self, k: usize) -> (f64, f64) {
        let xs: Vec<f64> = self.active_paths().map(|j| self.value(j, k)).collect();
        mean_se(&xs)
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.n_paths != other.n_paths || self.steps != other.steps || self.clock != other.clock {
            return Err(Error::Mismatch(format!(
                "samples '{}' and '{}' have different shapes",
                self.label, other.label
            )));
        }
        Ok(())
    }

    /// `self * a + other * b`, path-wise.
    pub fn combine(&self, a: f64, other: &Self, b: f64, label: impl Into<String>) -> Result<Self> {
        self.check_shape(other)?;
        let mut flagged = self.flagged.clone();
        flagged.extend(other.flagged.iter().filter(|j| !self.flagged.contains(j)));
        flagged.sort_unstable();
        Ok(Self {
            label: label.into(),
            clock: self.clock,
            n_paths: self.n_paths,
            steps: self.steps,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
            flagged,
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// Re-indexes a reversed-clock sample to forward time: the forward sample at `t_k` is
    /// `A_{v_{steps-k}, v_steps}`, so increments keep their sign per forward step.
    pub fn to_forward(&self) -> Self {
        match self.clock {
            Clock::Forward => self.clone(),
            Clock::Reversed => {
                let s = self.steps;
                let mut out = Self::from_increments(format!("{}[fwd]", self.label), self.n_paths, s, |j, k| {
                    self.value(j, s - k) - self.value(j, s - k - 1)
                });
                out.flagged = self.flagged.clone();
                out
            }
        }
    }
}

/// A vector-valued function evaluated along paths at grid slice `k` and time `t`.
pub trait Integrand: Sync {
    fn eval(&self, k: usize, t: f64, x: &Point) -> Point;
}

impl Integrand for VectorField {
    fn eval(&self, k: usize, _t: f64, x: &Point) -> Point {
        self.interp(k, x)
    }
}

/// Scalar gridded fields integrate against the first coordinate.
impl Integrand for SpaceTimeField {
    fn eval(&self, k: usize, _t: f64, x: &Point) -> Point {
        [self.interp(k, x), 0.0]
    }
}

/// Closed-form integrand `f(t, x)`.
pub struct FnIntegrand<F>(pub F);

impl<F: Fn(f64, &Point) -> Point + Sync> Integrand for FnIntegrand<F> {
    fn eval(&self, _k: usize, t: f64, x: &Point) -> Point {
        (self.0)(t, x)
    }
}

/// Values `f(t_k, X_k)` along every path, `[path][k]`.
pub(crate) fn along_paths(f: &dyn Integrand, e: &PathEnsemble) -> Vec<Point> {
    let width = e.steps + 1;
    (0..e.n_paths * width)
        .into_par_iter()
        .map(|slot| {
            let (j, k) = (slot / width, slot % width);
            f.eval(e.first + k, e.time(k), &e.point(j, k))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn additivity_and_reindexing() {
        let s = FunctionalSample::from_increments("x", 3, 5, |j, k| (j * 10 + k) as f64);
        for j in 0..3 {
            assert_eq!(s.value(j, 0), 0.0);
            assert_eq!(s.between(j, 1, 4), s.between(j, 1, 2) + s.between(j, 2, 4));
        }
        let mut r = s.clone();
        r.clock = Clock::Reversed;
        let f = r.to_forward();
        // reversed increment at index steps-1-k becomes forward increment k
        assert_eq!(f.increment(1, 0), s.increment(1, 4));
    }

    #[test]
    fn non_finite_paths_flagged() {
        let s = FunctionalSample::from_increments("x", 4, 3, |j, _| if j == 2 { f64::NAN } else { 1.0 });
        assert_eq!(s.flagged, vec![2]);
        assert_eq!(s.terminal(), vec![3.0, 3.0, 3.0]);
    }
}
