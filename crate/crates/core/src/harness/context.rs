//! Shared intermediates. They are built once, in dependency order, before any check runs,
//! and are read-only afterwards.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::calculus::{extract_parts, Parts};
use crate::error::Result;
use crate::model::{CoefficientField, Partition, Point, SpaceTimeGrid, Weight};
use crate::paths::{lattice_starts, weighted_starts, PathEnsemble, ReversedEnsemble, StepKernels};
use crate::pde::{fundamental_solution, KernelOptions, Scheme, TransitionKernel};

/// Intermediates a check may declare as dependencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Artifact {
    /// Kernel, ensemble and parts from the configured start.
    Main,
    /// Same from `x = 0.5`.
    Offset,
    /// Runs with parts from an even lattice of starts.
    Lattice,
    /// Ensembles from `rho`- and `sqrt(rho)`-distributed starts.
    Starts,
    /// Main run and start ensembles on a grid with twice the time steps.
    Refined,
}

/// Kernel, paths, reversed paths and Lyons-Zheng parts from one source.
pub struct Run {
    pub kernel: TransitionKernel,
    pub e: PathEnsemble,
    pub r: ReversedEnsemble,
    pub parts: Parts,
}

/// Ensembles at `rho`-distributed and `sqrt(rho)`-distributed starts.
pub struct StartEnsembles {
    pub rho: Vec<PathEnsemble>,
    pub root: Vec<PathEnsemble>,
}

pub struct Level {
    pub grid: SpaceTimeGrid,
    pub steps: StepKernels,
    pub main: Option<Run>,
    pub starts: Option<StartEnsembles>,
}

pub struct Context {
    pub config: ExperimentConfig,
    pub cf: CoefficientField,
    pub scheme: Scheme,
    pub weight: Weight,
    pub partitions: Vec<Partition>,
    pub base: Level,
    pub offset: Option<Run>,
    pub lattice: Option<Vec<Run>>,
    pub refined: Option<Level>,
}

pub const OFFSET_START: f64 = 0.5;

fn start_point(x: f64) -> Point {
    [x, 0.0]
}

impl Level {
    fn new(cf: &CoefficientField, grid: SpaceTimeGrid, scheme: Scheme) -> Result<Self> {
        Ok(Self {
            grid,
            steps: StepKernels::new(cf, &grid, scheme)?,
            main: None,
            starts: None,
        })
    }

    pub fn run_from(&self, cf: &CoefficientField, x: &Point, n_paths: usize, seed: u64) -> Result<Run> {
        let options = KernelOptions {
            scheme: self.steps.scheme(),
            ..Default::default()
        };
        let kernel = fundamental_solution(cf, 0.0, x, &self.grid, options)?;
        let e = self.steps.sample(0.0, x, n_paths, self.grid.nt, seed)?;
        let parts = extract_parts(&e, &kernel, cf)?;
        Ok(Run {
            r: e.reverse(),
            kernel,
            e,
            parts,
        })
    }

    fn start_ensembles(&self, cfg: &ExperimentConfig, w: &Weight) -> Result<StartEnsembles> {
        let space = self.grid.space;
        let ens = &cfg.ensemble;
        let seed = ens.seed;
        let sample = |starts: Vec<Point>, offset: u64| -> Result<Vec<PathEnsemble>> {
            starts
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    self.steps
                        .sample(0.0, x, ens.paths_per_start, self.grid.nt, seed + offset + i as u64)
                })
                .collect()
        };
        let count = ens.starts.clamp(2, 10);
        Ok(StartEnsembles {
            rho: sample(weighted_starts(&space, w, count, seed + 1), 2000)?,
            root: sample(weighted_starts(&space, &w.pow(0.5), count, seed + 2), 3000)?,
        })
    }
}

impl Context {
    /// Builds every artifact needed by `needs` (and their prerequisites).
    pub fn build(config: &ExperimentConfig, needs: &BTreeSet<Artifact>) -> Result<Self> {
        let cf = config.coefficient_field()?;
        let grid = config.space_time_grid()?;
        let scheme = config.scheme();
        let weight = config.weight();
        let ens = &config.ensemble;
        let mut base = Level::new(&cf, grid, scheme)?;
        if needs.contains(&Artifact::Main) {
            base.main = Some(base.run_from(&cf, &start_point(ens.start), ens.n_paths, ens.seed)?);
        }
        if needs.contains(&Artifact::Starts) {
            base.starts = Some(base.start_ensembles(config, &weight)?);
        }
        let offset = if needs.contains(&Artifact::Offset) {
            Some(base.run_from(&cf, &start_point(OFFSET_START), ens.n_paths, ens.seed + 1)?)
        } else {
            None
        };
        let lattice = if needs.contains(&Artifact::Lattice) {
            let runs = lattice_starts(&grid.space, ens.starts)
                .iter()
                .enumerate()
                .map(|(i, x)| base.run_from(&cf, x, ens.paths_per_start, ens.seed + 100 + i as u64))
                .collect::<Result<Vec<_>>>()?;
            Some(runs)
        } else {
            None
        };
        let refined = if needs.contains(&Artifact::Refined) {
            let mut level = Level::new(&cf, grid.with_nt(2 * grid.nt)?, scheme)?;
            level.main = Some(level.run_from(&cf, &start_point(ens.start), ens.n_paths, ens.seed + 7)?);
            level.starts = Some(level.start_ensembles(config, &weight)?);
            Some(level)
        } else {
            None
        };
        Ok(Self {
            config: config.clone(),
            partitions: config.partitions()?,
            cf,
            scheme,
            weight,
            base,
            offset,
            lattice,
            refined,
        })
    }

    pub fn grid(&self) -> SpaceTimeGrid {
        self.base.grid
    }

    /// Main run; present whenever a check declared [`Artifact::Main`].
    pub fn main(&self) -> &Run {
        self.base.main.as_ref().expect("main run was declared")
    }

    pub fn offset(&self) -> &Run {
        self.offset.as_ref().expect("offset run was declared")
    }

    pub fn lattice(&self) -> &[Run] {
        self.lattice.as_deref().expect("lattice runs were declared")
    }

    pub fn starts(&self) -> &StartEnsembles {
        self.base.starts.as_ref().expect("start ensembles were declared")
    }

    pub fn refined(&self) -> &Level {
        self.refined.as_ref().expect("refined level was declared")
    }
}
