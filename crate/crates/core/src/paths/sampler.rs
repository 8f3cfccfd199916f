use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{CoefficientField, Mat2, Point, SpaceTimeGrid};
use crate::pde::{Propagator, Scheme, TransitionKernel};

/// Entries below this fraction of the row maximum are dropped from the sampling table.
const ROW_CUTOFF: f64 = 1e-16;

/// One-step conditional law out of a node: sparse CDF plus its first two moments.
#[derive(Debug, Clone)]
pub struct StepRow {
    pub nodes: Vec<usize>,
    pub cdf: Vec<f64>,
    /// Surviving mass; the rest is killed at the boundary.
    pub mass: f64,
    /// Mean displacement conditional on survival.
    pub mean: Point,
    pub covariance: Mat2,
}

impl StepRow {
    fn from_dense(grid: &SpaceTimeGrid, origin: usize, probs: &[f64]) -> Self {
        let space = grid.space;
        let peak = probs.iter().fold(0.0f64, |a, v| a.max(*v));
        let z = space.coord(origin);
        let mut nodes = Vec::new();
        let mut cdf = Vec::new();
        let mut acc = 0.0;
        let mut first = [0.0; 2];
        let mut second = [[0.0; 2]; 2];
        for (j, &p) in probs.iter().enumerate() {
            if p <= ROW_CUTOFF * peak || p <= 0.0 {
                continue;
            }
            acc += p;
            nodes.push(j);
            cdf.push(acc);
            let y = space.coord(j);
            for a in 0..space.dim {
                let da = y[a] - z[a];
                first[a] += p * da;
                for b in 0..space.dim {
                    second[a][b] += p * da * (y[b] - z[b]);
                }
            }
        }
        let mass = acc;
        let mut mean = [0.0; 2];
        let mut covariance = [[0.0; 2]; 2];
        if mass > 0.0 {
            for a in 0..space.dim {
                mean[a] = first[a] / mass;
            }
            for a in 0..space.dim {
                for b in 0..space.dim {
                    covariance[a][b] = second[a][b] / mass - mean[a] * mean[b];
                }
            }
        }
        Self {
            nodes,
            cdf,
            mass,
            mean,
            covariance,
        }
    }

    /// Node index for a uniform draw in `[0, mass)`.
    fn pick(&self, u: f64) -> usize {
        let pos = self.cdf.partition_point(|c| *c <= u).min(self.nodes.len() - 1);
        self.nodes[pos]
    }
}

/// Lazily computed one-step kernels `p(t_n, z, t_{n+1}, .)`, cached by (time key, node).
#[derive(Debug)]
pub struct StepKernels {
    prop: Propagator,
    cache: RwLock<HashMap<(usize, usize), Arc<StepRow>>>,
}

impl StepKernels {
    pub fn new(cf: &CoefficientField, grid: &SpaceTimeGrid, scheme: Scheme) -> Result<Self> {
        Ok(Self {
            prop: Propagator::new(cf, grid, scheme)?,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn grid(&self) -> SpaceTimeGrid {
        self.prop.grid
    }

    pub fn coefficients(&self) -> &CoefficientField {
        &self.prop.cf
    }

    pub fn scheme(&self) -> Scheme {
        self.prop.scheme
    }

    pub fn cached_rows(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    pub fn row(&self, n: usize, node: usize) -> Result<Arc<StepRow>> {
        let key = (self.prop.time_key(n), node);
        if let Some(row) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(Arc::clone(row));
        }
        let dense = self.prop.transition_row(n, node)?;
        let row = StepRow::from_dense(&self.prop.grid, node, &dense);
        if !(row.mass > 0.0) {
            return Err(Error::EmptyRow { node, step: n });
        }
        let row = Arc::new(row);
        self.cache.write().expect("cache lock").insert(key, Arc::clone(&row));
        Ok(row)
    }

    /// Ensures rows for all `(n, node)` pairs exist, computing missing ones in parallel.
    fn prefetch(&self, n: usize, nodes: &[usize]) -> Result<Vec<Arc<StepRow>>> {
        let mut unique: Vec<usize> = nodes.to_vec();
        unique.sort_unstable();
        unique.dedup();
        let rows: Vec<(usize, Arc<StepRow>)> = unique
            .par_iter()
            .map(|&node| self.row(n, node).map(|r| (node, r)))
            .collect::<Result<_>>()?;
        let lookup: HashMap<usize, Arc<StepRow>> = rows.into_iter().collect();
        Ok(nodes.iter().map(|node| Arc::clone(&lookup[node])).collect())
    }

    /// Samples `n_paths` paths of `n_steps` steps from `(s, x)`; `s` is snapped to the grid.
    pub fn sample(&self, s: f64, x: &Point, n_paths: usize, n_steps: usize, seed: u64) -> Result<PathEnsemble> {
        let grid = self.grid();
        let space = grid.space;
        let dim = space.dim;
        let first = grid.time_index(s);
        if first + n_steps > grid.nt {
            return invalid(format!("{n_steps} steps from t = {s} overrun the horizon"));
        }
        let origin = match space.nearest(x) {
            Some(node) if !space.is_boundary(node) => node,
            _ => return invalid(format!("start {:?} is not in the box interior", &x[..dim])),
        };
        // paths move by lattice increments and keep the start's offset from its node
        let zc = space.coord(origin);
        let mut offset = [0.0; 2];
        for c in 0..dim {
            offset[c] = x[c] - zc[c];
        }
        let width = n_steps + 1;
        let mut nodes = vec![origin as u32; n_paths * width];
        let mut drift = vec![0.0; n_paths * n_steps * dim];
        let mut rngs: Vec<ChaCha8Rng> = (0..n_paths)
            .map(|j| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(j as u64);
                rng
            })
            .collect();
        let mut resamples = 0usize;
        for step in 0..n_steps {
            let n = first + step;
            let current: Vec<usize> = (0..n_paths).map(|j| nodes[j * width + step] as usize).collect();
            let rows = self.prefetch(n, &current)?;
            let draws: Vec<(usize, usize)> = rngs
                .par_iter_mut()
                .zip(rows.par_iter())
                .map(|(rng, row)| {
                    let mut redraws = 0;
                    loop {
                        let u: f64 = rng.gen();
                        if u < row.mass {
                            return (row.pick(u), redraws);
                        }
                        redraws += 1;
                    }
                })
                .collect();
            for (j, (next, redraws)) in draws.into_iter().enumerate() {
                nodes[j * width + step + 1] = next as u32;
                resamples += redraws;
                let mean = rows[j].mean;
                for c in 0..dim {
                    drift[(j * n_steps + step) * dim + c] = mean[c];
                }
            }
        }
        let mut points = vec![0.0; n_paths * width * dim];
        for (slot, node) in nodes.iter().enumerate() {
            let z = space.coord(*node as usize);
            for c in 0..dim {
                points[slot * dim + c] = z[c] + offset[c];
            }
        }
        // the start is reproduced exactly rather than as node + offset
        for j in 0..n_paths {
            for c in 0..dim {
                points[j * width * dim + c] = x[c];
            }
        }
        Ok(PathEnsemble {
            grid,
            first,
            source: *x,
            n_paths,
            steps: n_steps,
            seed,
            points,
            nodes,
            drift,
            resamples,
        })
    }
}

/// `n_paths` sampled paths from one source `(s, x)` on grid times `t_first .. t_{first+steps}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEnsemble {
    pub grid: SpaceTimeGrid,
    pub first: usize,
    pub source: Point,
    pub n_paths: usize,
    pub steps: usize,
    pub seed: u64,
    /// `[path][step][axis]`, flattened.
    pub points: Vec<f64>,
    /// Lattice node of each path point.
    pub nodes: Vec<u32>,
    /// Conditional mean displacement of each step, `[path][step][axis]`.
    pub drift: Vec<f64>,
    /// Draws that landed in the killed mass and were redrawn.
    pub resamples: usize,
}

impl PathEnsemble {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn source_time(&self) -> f64 {
        self.grid.time(self.first)
    }

    /// Grid time of local step index `k`.
    pub fn time(&self, k: usize) -> f64 {
        self.grid.time(self.first + k)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    pub fn point(&self, path: usize, k: usize) -> Point {
        let d = self.dim();
        let base = (path * (self.steps + 1) + k) * d;
        let mut p = [0.0; 2];
        p[..d].copy_from_slice(&self.points[base..base + d]);
        p
    }

    pub fn node(&self, path: usize, k: usize) -> usize {
        self.nodes[path * (self.steps + 1) + k] as usize
    }

    /// Conditional mean displacement of step `k -> k+1`.
    pub fn step_drift(&self, path: usize, k: usize) -> Point {
        let d = self.dim();
        let base = (path * self.steps + k) * d;
        let mut p = [0.0; 2];
        p[..d].copy_from_slice(&self.drift[base..base + d]);
        p
    }

    pub fn increment(&self, path: usize, k: usize) -> Point {
        let a = self.point(path, k);
        let b = self.point(path, k + 1);
        [b[0] - a[0], b[1] - a[1]]
    }

    pub fn reverse(&self) -> ReversedEnsemble {
        ReversedEnsemble {
            forward_first: self.first,
            grid: self.grid,
            source: self.source,
            n_paths: self.n_paths,
            steps: self.steps,
            seed: self.seed,
            points: reverse_rows(&self.points, self.n_paths, self.steps + 1, self.dim()),
            nodes: reverse_rows(&self.nodes, self.n_paths, self.steps + 1, 1),
            drift: reverse_rows(&self.drift, self.n_paths, self.steps, self.dim()),
            resamples: self.resamples,
        }
    }
}

/// The same paths indexed by reversed time `t -> T + s - t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReversedEnsemble {
    pub forward_first: usize,
    pub grid: SpaceTimeGrid,
    pub source: Point,
    pub n_paths: usize,
    pub steps: usize,
    pub seed: u64,
    pub points: Vec<f64>,
    pub nodes: Vec<u32>,
    pub drift: Vec<f64>,
    pub resamples: usize,
}

impl ReversedEnsemble {
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Reversed point at reversed index `k`, i.e. the forward point at `steps - k`.
    pub fn point(&self, path: usize, k: usize) -> Point {
        let d = self.dim();
        let base = (path * (self.steps + 1) + k) * d;
        let mut p = [0.0; 2];
        p[..d].copy_from_slice(&self.points[base..base + d]);
        p
    }

    /// Forward-grid time of reversed index `k`.
    pub fn time(&self, k: usize) -> f64 {
        self.grid.time(self.forward_first + self.steps - k)
    }

    pub fn reverse(&self) -> PathEnsemble {
        PathEnsemble {
            grid: self.grid,
            first: self.forward_first,
            source: self.source,
            n_paths: self.n_paths,
            steps: self.steps,
            seed: self.seed,
            points: reverse_rows(&self.points, self.n_paths, self.steps + 1, self.dim()),
            nodes: reverse_rows(&self.nodes, self.n_paths, self.steps + 1, 1),
            drift: reverse_rows(&self.drift, self.n_paths, self.steps, self.dim()),
            resamples: self.resamples,
        }
    }
}

fn reverse_rows<T: Copy>(data: &[T], rows: usize, len: usize, width: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(data.len());
    for r in 0..rows {
        for k in (0..len).rev() {
            let base = (r * len + k) * width;
            out.extend_from_slice(&data[base..base + width]);
        }
    }
    out
}

/// Samples paths from the source of `kernel` with the given one-step kernel chain.
pub fn sample_paths(
    kernels: &StepKernels,
    kernel: &TransitionKernel,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    if kernel.grid() != kernels.grid() {
        return Err(Error::Mismatch("kernel and step chain live on different grids".into()));
    }
    kernels.sample(kernel.source_time, &kernel.source_point, n_paths, n_steps, seed)
}
