use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context as _, Result};
use clap::{Parser, Subcommand};
use divlab::harness::{self, ExperimentConfig, RunReport, CHECKS, WORKERS_ENV};

#[derive(Parser)]
#[command(name = "divlab", version, about = "Run and compare divlab verification batteries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the battery of a JSON experiment config.
    Run {
        config: PathBuf,
        /// Output directory; defaults to the config's `output`, then `out/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run only these checks.
        #[arg(long, num_args = 1..)]
        filter: Vec<String>,
    },
    /// Per-check differences between two reports.
    Compare { a: PathBuf, b: PathBuf },
    /// List the available checks.
    ListChecks,
}

fn init_workers() -> Result<()> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .parse()
        .with_context(|| format!("{WORKERS_ENV}={raw} is not a thread count"))?;
    if n == 0 {
        bail!("{WORKERS_ENV} must be positive");
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

/// Errors from the library are reported as JSON on stderr so callers can parse them.
fn structured(err: &divlab::Error) -> serde_json::Value {
    use divlab::Error;
    match err {
        Error::Stability { scheme, tau, bound } => serde_json::json!({
            "kind": "stability", "scheme": scheme, "tau": tau, "bound": bound, "message": err.to_string(),
        }),
        Error::Config(_) | Error::InvalidInput(_) | Error::Json(_) => {
            serde_json::json!({ "kind": "config", "message": err.to_string() })
        }
        Error::Io(_) => serde_json::json!({ "kind": "io", "message": err.to_string() }),
        _ => serde_json::json!({ "kind": "runtime", "message": err.to_string() }),
    }
}

fn run(config: PathBuf, out: Option<PathBuf>, filter: Vec<String>) -> Result<ExitCode> {
    let cfg = match ExperimentConfig::load(&config).and_then(|c| c.filtered(&filter)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": structured(&e) }));
            return Ok(ExitCode::from(2));
        }
    };
    let output = match harness::run(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": structured(&e) }));
            return Ok(ExitCode::from(2));
        }
    };
    let dir = out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    harness::write_outputs(&output, &cfg, &dir).with_context(|| format!("writing outputs to {}", dir.display()))?;
    let report = &output.report;
    for c in &report.checks {
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        match &c.error {
            Some(e) => println!("{verdict} {:<20} error: {e}", c.name),
            None => println!(
                "{verdict} {:<20} statistic {:>12.5e} target {:>12.5e} tol {:>10.3e} ({:.1}s)",
                c.name, c.statistic, c.target, c.tolerance, c.seconds
            ),
        }
    }
    println!(
        "{} passed, {} failed in {:.1}s; outputs in {}",
        report.passed,
        report.failed,
        report.seconds,
        dir.display()
    );
    Ok(if report.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn compare(a: PathBuf, b: PathBuf) -> Result<ExitCode> {
    let ra = RunReport::load(&a).with_context(|| format!("reading {}", a.display()))?;
    let rb = RunReport::load(&b).with_context(|| format!("reading {}", b.display()))?;
    let diff = harness::compare(&ra, &rb)?;
    println!("{}", serde_json::to_string_pretty(&diff)?);
    Ok(if diff.regressions() == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    init_workers()?;
    match cli.command {
        Command::Run { config, out, filter } => run(config, out, filter),
        Command::Compare { a, b } => compare(a, b),
        Command::ListChecks => {
            for c in CHECKS {
                println!("{:<20} {}", c.name, c.summary);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
