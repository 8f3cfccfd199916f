//! Experiment configuration, orchestration, persistence and report comparison.

mod checks;
mod config;
mod context;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use checks::{find_check, half_abs_normal_moment, CheckOutput, CheckSpec, CHECKS, ROUGH_SEEDS};
pub use config::{EnsembleConfig, ExperimentConfig, GridConfig, MIN_LEVEL};
pub use context::{Artifact, Context, Level, Run, StartEnsembles, OFFSET_START};

use crate::error::{Error, Result};
use crate::field::SpaceTimeField;
use crate::io::{write_grid, Table};
use crate::report::json_float;

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "DIVLAB_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub summary: String,
    /// SHA-256 of the check name and every config field that can influence it.
    pub inputs_digest: String,
    #[serde(with = "json_float")]
    pub statistic: f64,
    #[serde(with = "json_float")]
    pub target: f64,
    #[serde(with = "json_float")]
    pub tolerance: f64,
    pub pass: bool,
    #[serde(with = "json_float::map")]
    pub values: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    /// Set when the check could not be evaluated; such checks fail.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub version: String,
    pub os: String,
    pub arch: String,
    pub workers: usize,
}

impl Environment {
    pub fn current() -> Self {
        Self {
            version: env!("CARGO_PKG_VERSION").to_owned(),
            os: std::env::consts::OS.to_owned(),
            arch: std::env::consts::ARCH.to_owned(),
            workers: rayon::current_num_threads(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub config_digest: String,
    pub environment: Environment,
    pub checks: Vec<CheckRecord>,
    pub passed: usize,
    pub failed: usize,
    pub setup_seconds: f64,
    pub seconds: f64,
}

impl RunReport {
    pub fn all_pass(&self) -> bool {
        self.failed == 0
    }

    pub fn check(&self, name: &str) -> Option<&CheckRecord> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// A report plus the tables and grids its checks produced.
pub struct RunOutput {
    pub report: RunReport,
    /// `(check name, table)` in battery order.
    pub tables: Vec<(String, Table)>,
    pub grids: Vec<(String, SpaceTimeField)>,
}

fn digest<T: Serialize>(value: &T) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(value)?)))
}

type Outcome = (CheckRecord, Vec<Table>, Vec<(String, SpaceTimeField)>);

/// Runs the battery: artifacts are built in dependency order, then checks run in parallel.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let started = Instant::now();
    let specs: Vec<&CheckSpec> = config
        .battery
        .iter()
        .map(|n| find_check(n).ok_or_else(|| Error::Config(format!("unknown check '{n}'"))))
        .collect::<Result<_>>()?;
    let needs: BTreeSet<Artifact> = specs.iter().flat_map(|s| s.needs.iter().copied()).collect();
    let ctx = Context::build(config, &needs)?;
    let setup_seconds = started.elapsed().as_secs_f64();

    let mut inputs = config.clone();
    inputs.battery.clear();
    inputs.output = None;
    let outcomes: Vec<Outcome> = specs
        .par_iter()
        .map(|spec| {
            let t0 = Instant::now();
            let outcome = (spec.run)(&ctx);
            let seconds = t0.elapsed().as_secs_f64();
            let inputs_digest = digest(&(spec.name, &inputs))?;
            let record = |r: crate::report::BoundReport, error: Option<String>| CheckRecord {
                name: spec.name.to_owned(),
                summary: spec.summary.to_owned(),
                inputs_digest: inputs_digest.clone(),
                statistic: r.statistic,
                target: r.target,
                tolerance: r.tolerance,
                pass: r.pass && error.is_none(),
                values: r.values,
                notes: r.notes,
                error,
                seconds,
            };
            Ok(match outcome {
                Ok(out) => (record(out.report, None), out.tables, out.grids),
                Err(e) => {
                    let blank = crate::report::BoundReport::new(spec.name, f64::NAN, f64::NAN, 0.0, false);
                    (record(blank, Some(e.to_string())), Vec::new(), Vec::new())
                }
            })
        })
        .collect::<Result<_>>()?;

    let mut checks = Vec::new();
    let mut tables = Vec::new();
    let mut grids = Vec::new();
    for (record, ts, gs) in outcomes {
        tables.extend(ts.into_iter().map(|t| (record.name.clone(), t)));
        grids.extend(gs.into_iter().map(|(n, g)| (format!("{}_{n}", record.name), g)));
        checks.push(record);
    }
    let passed = checks.iter().filter(|c| c.pass).count();
    Ok(RunOutput {
        report: RunReport {
            name: config.name.clone(),
            config_digest: digest(&inputs)?,
            environment: Environment::current(),
            failed: checks.len() - passed,
            passed,
            checks,
            setup_seconds,
            seconds: started.elapsed().as_secs_f64(),
        },
        tables,
        grids,
    })
}

/// Writes `config.json`, `report.json`, one CSV per table and one grid file per field.
/// Returns the written paths.
pub fn write_outputs(out: &RunOutput, config: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, serde_json::to_string_pretty(config)?)?;
    written.push(config_path);
    let report_path = dir.join("report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&out.report)?)?;
    written.push(report_path);
    if !out.tables.is_empty() {
        let ladders = dir.join("ladders");
        std::fs::create_dir_all(&ladders)?;
        for (check, table) in &out.tables {
            let path = ladders.join(format!("{check}__{}.csv", table.name));
            table.write_csv(&path)?;
            written.push(path);
        }
    }
    if !out.grids.is_empty() {
        let grids = dir.join("grids");
        std::fs::create_dir_all(&grids)?;
        for (name, field) in &out.grids {
            let path = grids.join(format!("{name}.dlgrid"));
            write_grid(&path, name, field)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckDelta {
    pub name: String,
    #[serde(with = "json_float")]
    pub statistic_a: f64,
    #[serde(with = "json_float")]
    pub statistic_b: f64,
    #[serde(with = "json_float")]
    pub delta: f64,
    pub pass_a: bool,
    pub pass_b: bool,
    /// `b` fails where `a` passed, or the statistic moved by more than the check's tolerance.
    pub regression: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Only checks whose statistic or verdict changed.
    pub deltas: Vec<CheckDelta>,
}

impl Comparison {
    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn regressions(&self) -> usize {
        self.deltas.iter().filter(|d| d.regression).count()
    }
}

fn same_number(a: f64, b: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan())
}

/// Per-check differences between two reports of the same battery.
pub fn compare(a: &RunReport, b: &RunReport) -> Result<Comparison> {
    let names = |r: &RunReport| r.checks.iter().map(|c| c.name.clone()).collect::<BTreeSet<_>>();
    if names(a) != names(b) {
        return Err(Error::Mismatch(format!(
            "batteries differ: {:?} vs {:?}",
            names(a),
            names(b)
        )));
    }
    let deltas = a
        .checks
        .iter()
        .filter_map(|ca| {
            let cb = b.check(&ca.name)?;
            if same_number(ca.statistic, cb.statistic) && ca.pass == cb.pass {
                return None;
            }
            let delta = cb.statistic - ca.statistic;
            let drifted = ca.tolerance > 0.0 && delta.abs() > ca.tolerance;
            Some(CheckDelta {
                name: ca.name.clone(),
                statistic_a: ca.statistic,
                statistic_b: cb.statistic,
                delta,
                pass_a: ca.pass,
                pass_b: cb.pass,
                regression: (ca.pass && !cb.pass) || drifted,
            })
        })
        .collect();
    Ok(Comparison { deltas })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Preset;

    pub(crate) fn small_config(battery: &[&str]) -> ExperimentConfig {
        ExperimentConfig {
            name: "small".into(),
            dim: 1,
            coefficients: Preset::Identity {
                scale: 1.0,
                drift: vec![],
            },
            weight_alpha: 1.0,
            grid: GridConfig {
                lo: -4.0,
                hi: 4.0,
                nx: 81,
                horizon: 1.0,
                nt: 64,
            },
            ensemble: EnsembleConfig {
                n_paths: 200,
                seed: 3,
                start: 0.0,
                starts: 4,
                paths_per_start: 20,
            },
            theta: 0.5,
            max_level: 4,
            battery: battery.iter().map(|s| s.to_string()).collect(),
            output: None,
        }
    }

    #[test]
    fn registry_names_are_unique() {
        let names: BTreeSet<_> = CHECKS.iter().map(|c| c.name).collect();
        assert_eq!(names.len(), CHECKS.len());
    }

    #[test]
    fn empty_battery_runs_no_checks() {
        let out = run(&small_config(&[])).unwrap();
        assert!(out.report.checks.is_empty());
        assert!(out.report.all_pass());
    }

    #[test]
    fn validation_errors() {
        let mut c = small_config(&["nonexistent"]);
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        c = small_config(&["covariation", "covariation"]);
        assert!(c.validate().is_err());
        c = small_config(&[]);
        c.grid.nt = 8;
        assert!(matches!(
            c.validate(),
            Err(Error::Stability { .. }) | Err(Error::Config(_))
        ));
        c = small_config(&[]);
        c.grid.nt = 16;
        c.max_level = 4;
        // tau = 1/16 exceeds the Crank-Nicolson bound 2h^2 = 0.02
        assert!(matches!(c.validate(), Err(Error::Stability { .. })));
    }

    #[test]
    fn config_round_trips_and_filters() {
        let c = small_config(&["covariation", "capacity"]);
        let text = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        let f = c.clone().filtered(&["capacity".to_owned()]).unwrap();
        assert_eq!(f.battery, vec!["capacity".to_owned()]);
        assert!(c.filtered(&["energy".to_owned()]).is_err());
        let missing_seed = text.replace("\"seed\":3,", "");
        assert!(serde_json::from_str::<ExperimentConfig>(&missing_seed).is_err());
    }

    #[test]
    fn reruns_are_identical_and_compare_empty() {
        let c = small_config(&["covariation", "star_identity"]);
        let a = run(&c).unwrap();
        let b = run(&c).unwrap();
        assert_eq!(a.tables, b.tables);
        let pa: Vec<_> = a
            .report
            .checks
            .iter()
            .map(|c| (c.pass, c.statistic, c.inputs_digest.clone()))
            .collect();
        let pb: Vec<_> = b
            .report
            .checks
            .iter()
            .map(|c| (c.pass, c.statistic, c.inputs_digest.clone()))
            .collect();
        assert_eq!(pa, pb);
        assert!(compare(&a.report, &b.report).unwrap().is_empty());
        let other = run(&small_config(&["covariation"])).unwrap();
        assert!(compare(&a.report, &other.report).is_err());
    }

    #[test]
    fn compare_flags_regressions() {
        let c = small_config(&["star_identity"]);
        let a = run(&c).unwrap().report;
        let mut b = a.clone();
        b.checks[0].statistic += 1.0;
        b.checks[0].pass = false;
        let diff = compare(&a, &b).unwrap();
        assert_eq!(diff.deltas.len(), 1);
        assert_eq!(diff.regressions(), usize::from(a.checks[0].pass));
    }

    #[test]
    fn failing_checks_are_recorded_not_raised() {
        let mut c = small_config(&["kernel_oracle"]);
        c.coefficients = Preset::Identity {
            scale: 2.0,
            drift: vec![],
        };
        c.grid.nt = 128;
        let out = run(&c).unwrap();
        let rec = &out.report.checks[0];
        assert!(!rec.pass);
        assert!(rec.error.as_deref().unwrap().contains("Brownian"));
    }

    #[test]
    fn outputs_are_written() {
        let c = small_config(&["kernel_oracle", "zero_qv"]);
        let out = run(&c).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_outputs(&out, &c, dir.path()).unwrap();
        assert!(files.iter().any(|f| f.ends_with("report.json")));
        assert!(files.iter().any(|f| f.extension().is_some_and(|e| e == "csv")));
        let grid = files
            .iter()
            .find(|f| f.extension().is_some_and(|e| e == "dlgrid"))
            .unwrap();
        let (header, _) = crate::io::read_grid(grid).unwrap();
        assert_eq!(header.label, "kernel_oracle_kernel_density");
        let back = RunReport::load(&dir.path().join("report.json")).unwrap();
        assert_eq!(back.checks.len(), 2);
    }
}
