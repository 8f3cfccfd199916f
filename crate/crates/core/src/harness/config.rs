use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::checks::find_check;
use crate::error::{Error, Result};
use crate::model::{dyadic_partitions, CoefficientField, Partition, Preset, SpaceGrid, SpaceTimeGrid, Weight};
use crate::paths::StepKernels;
use crate::pde::Scheme;

/// Box, resolution and horizon of the simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub nx: usize,
    #[serde(default = "unit")]
    pub horizon: f64,
    pub nt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    /// Required: runs never fall back to wall-clock seeding.
    pub seed: u64,
    /// Start point (first coordinate; the second is 0 in 2D) of the main ensemble.
    #[serde(default)]
    pub start: f64,
    /// Number of starting points in the multi-start batteries.
    #[serde(default = "default_starts")]
    pub starts: usize,
    #[serde(default = "default_paths_per_start")]
    pub paths_per_start: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dim: usize,
    pub coefficients: Preset,
    /// Exponent of the weight `rho(x) = (1 + |x|^2)^(-alpha)`.
    #[serde(default = "unit")]
    pub weight_alpha: f64,
    pub grid: GridConfig,
    pub ensemble: EnsembleConfig,
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Finest dyadic partition level.
    #[serde(default = "default_max_level")]
    pub max_level: u32,
    /// Checks to run, by registry name.
    pub battery: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn unit() -> f64 {
    1.0
}

fn default_theta() -> f64 {
    0.5
}

fn default_max_level() -> u32 {
    7
}

fn default_starts() -> usize {
    25
}

fn default_paths_per_start() -> usize {
    200
}

/// Lowest dyadic level used by the variation ladders.
pub const MIN_LEVEL: u32 = 2;

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn coefficient_field(&self) -> Result<CoefficientField> {
        CoefficientField::from_preset(self.dim, self.coefficients.clone())
    }

    pub fn space_time_grid(&self) -> Result<SpaceTimeGrid> {
        let g = &self.grid;
        let space = SpaceGrid::cube(self.dim, g.lo, g.hi, g.nx)?;
        SpaceTimeGrid::new(space, g.horizon, g.nt)
    }

    pub fn scheme(&self) -> Scheme {
        Scheme { theta: self.theta }
    }

    pub fn weight(&self) -> Weight {
        Weight::new(self.weight_alpha, self.dim)
    }

    /// Dyadic partitions of `[0, T]` from [`MIN_LEVEL`] to `max_level`.
    pub fn partitions(&self) -> Result<Vec<Partition>> {
        let mut all = dyadic_partitions(0.0, self.grid.horizon, self.max_level)?;
        Ok(all.split_off(MIN_LEVEL as usize - 1))
    }

    /// Structural checks plus the scheme's stability bound.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(0.5..=1.0).contains(&self.theta) {
            return fail(format!("theta must lie in [0.5, 1], got {}", self.theta));
        }
        if self.max_level < MIN_LEVEL + 2 {
            return fail(format!("max_level must be at least {}", MIN_LEVEL + 2));
        }
        let finest = 1usize << self.max_level;
        if !self.grid.nt.is_multiple_of(finest) {
            return fail(format!(
                "nt = {} must be a multiple of 2^max_level = {finest} so partitions nest in the grid",
                self.grid.nt
            ));
        }
        let e = &self.ensemble;
        if e.n_paths < 2 || e.starts < 2 || e.paths_per_start < 2 {
            return fail("ensembles need at least 2 paths and 2 starts".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in &self.battery {
            if find_check(name).is_none() {
                return fail(format!("unknown check '{name}' (see list-checks)"));
            }
            if !seen.insert(name) {
                return fail(format!("check '{name}' listed twice"));
            }
        }
        let cf = self.coefficient_field()?;
        let grid = self.space_time_grid()?;
        if !grid.space.contains(&[e.start, 0.0]) {
            return fail(format!("start {} lies outside the box", e.start));
        }
        // building the step kernels enforces the stability bound
        StepKernels::new(&cf, &grid, self.scheme())?;
        Ok(())
    }

    /// Keeps only the named checks; every name must be in the battery.
    pub fn filtered(mut self, names: &[String]) -> Result<Self> {
        if names.is_empty() {
            return Ok(self);
        }
        for n in names {
            if !self.battery.contains(n) {
                return Err(Error::Config(format!("filter '{n}' is not in the battery")));
            }
        }
        self.battery.retain(|b| names.contains(b));
        Ok(self)
    }
}
