use serde::{Deserialize, Serialize};

use super::parts::Parts;
use super::sample::{along_paths, Clock, FunctionalSample, Integrand};
use crate::error::{invalid, Error, Result};
use crate::model::{mat_vec, CoefficientField, Point};
use crate::paths::{PathEnsemble, ReversedEnsemble};
use crate::stats::{linear_fit, mean_se};

/// Ladder exponents `k` in `delta_k = 2^{-k} (T - s)`.
pub const PV_LADDER: std::ops::RangeInclusive<u32> = 2..=8;
/// Band-increment ratio above which a monotone ladder is declared divergent.
pub const PV_DIVERGENCE_RATIO: f64 = 0.8;

/// `a^{-1} f`, the integrand that turns a star integral into `int div f dtheta`.
pub struct InverseDiffusion<'a, I: ?Sized> {
    pub cf: &'a CoefficientField,
    pub inner: &'a I,
}

impl<I: Integrand + ?Sized> Integrand for InverseDiffusion<'_, I> {
    fn eval(&self, k: usize, t: f64, x: &Point) -> Point {
        let v = self.inner.eval(k, t, x);
        match self.cf.a_inv(t, x) {
            Ok(inv) => mat_vec(self.cf.dim, &inv, &v),
            Err(_) => [f64::NAN; 2],
        }
    }
}

fn check_components(parts: &[FunctionalSample], dim: usize, n_paths: usize, steps: usize, clock: Clock) -> Result<()> {
    if parts.len() != dim {
        return invalid(format!("expected {dim} components, got {}", parts.len()));
    }
    if parts
        .iter()
        .any(|p| p.n_paths != n_paths || p.steps != steps || p.clock != clock)
    {
        return Err(Error::Mismatch("integrator does not match the ensemble".into()));
    }
    Ok(())
}

fn with_flags(mut out: FunctionalSample, from: &[FunctionalSample]) -> FunctionalSample {
    for p in from {
        out.flagged.extend(p.flagged.iter().copied());
    }
    out.flagged.sort_unstable();
    out.flagged.dedup();
    for &j in &out.flagged {
        let w = out.steps + 1;
        out.values[j * w..(j + 1) * w].iter_mut().for_each(|v| *v = 0.0);
    }
    out
}

/// Left-endpoint sums `sum f(t_k, X_k) . (M_{k+1} - M_k)`.
pub fn forward_integral(f: &dyn Integrand, m: &[FunctionalSample], e: &PathEnsemble) -> Result<FunctionalSample> {
    let d = e.dim();
    check_components(m, d, e.n_paths, e.steps, Clock::Forward)?;
    let values = along_paths(f, e);
    let w = e.steps + 1;
    let out = FunctionalSample::from_increments("int f dM", e.n_paths, e.steps, |j, k| {
        let fv = values[j * w + k];
        (0..d).map(|c| fv[c] * m[c].increment(j, k)).sum()
    });
    Ok(with_flags(out, m))
}

/// Left-endpoint sums in reversed time against `N` (stored on the reversed clock),
/// re-indexed to forward time.
pub fn backward_integral(
    f: &dyn Integrand,
    n: &[FunctionalSample],
    reversed: &ReversedEnsemble,
) -> Result<FunctionalSample> {
    let d = reversed.dim();
    check_components(n, d, reversed.n_paths, reversed.steps, Clock::Reversed)?;
    let steps = reversed.steps;
    let mut out = FunctionalSample::from_increments("int f dN", reversed.n_paths, steps, |j, i| {
        let fv = f.eval(
            reversed.forward_first + steps - i,
            reversed.time(i),
            &reversed.point(j, i),
        );
        (0..d).map(|c| fv[c] * n[c].increment(j, i)).sum()
    });
    out.clock = Clock::Reversed;
    let out = with_flags(out, n).to_forward();
    Ok(FunctionalSample {
        label: "int f dN".into(),
        ..out
    })
}

/// How increments of `alpha` enter the Stieltjes sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum AlphaMode {
    /// Signed sums over `[t_from, T]`; `from` is a local step index and must be positive.
    Plain { from: usize },
    /// Sums against the total variation `|d alpha|`, componentwise, from the source.
    Variation,
    /// Ladder of integrals over `[s + delta_k, T]`, extrapolated as `delta_k -> 0`.
    PrincipalValue { variation: bool },
}

/// Convergence diagnostic for the principal-value ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvDiagnostic {
    pub deltas: Vec<f64>,
    /// Mean over paths of the ladder integrals (absolute values in signed mode).
    pub values: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Fitted geometric ratio of successive band increments.
    pub band_ratio: f64,
    pub extrapolated: f64,
    pub divergent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaIntegral {
    pub sample: FunctionalSample,
    pub diagnostic: Option<PvDiagnostic>,
}

/// Stieltjes sums of `f` against the density drift.
pub fn alpha_integral(
    f: &dyn Integrand,
    alpha: &[FunctionalSample],
    e: &PathEnsemble,
    mode: AlphaMode,
) -> Result<AlphaIntegral> {
    let d = e.dim();
    check_components(alpha, d, e.n_paths, e.steps, Clock::Forward)?;
    let values = along_paths(f, e);
    let w = e.steps + 1;
    let sum = |from: usize, variation: bool, label: &str| {
        let out = FunctionalSample::from_increments(label, e.n_paths, e.steps, |j, k| {
            if k < from {
                return 0.0;
            }
            let fv = values[j * w + k];
            (0..d)
                .map(|c| {
                    let da = alpha[c].increment(j, k);
                    fv[c] * if variation { da.abs() } else { da }
                })
                .sum()
        });
        with_flags(out, alpha)
    };
    match mode {
        AlphaMode::Plain { from } => {
            if from == 0 || from > e.steps {
                return invalid(format!(
                    "plain alpha integral needs a start strictly after the source, got step {from}"
                ));
            }
            Ok(AlphaIntegral {
                sample: sum(from, false, "int f dalpha"),
                diagnostic: None,
            })
        }
        AlphaMode::Variation => Ok(AlphaIntegral {
            sample: sum(0, true, "int f d|alpha|"),
            diagnostic: None,
        }),
        AlphaMode::PrincipalValue { variation } => {
            let span = e.time(e.steps) - e.time(0);
            let tau = e.grid.tau;
            let mut deltas = Vec::new();
            let mut means = Vec::new();
            let mut ses = Vec::new();
            let mut finest = None;
            for level in PV_LADDER {
                let delta = span / f64::from(1u32 << level);
                let from = (delta / tau).round() as usize;
                if from == 0 {
                    return invalid(format!(
                        "time step too coarse for the p.v. ladder at delta = {delta:.3e}"
                    ));
                }
                let s = sum(from, variation, "p.v. int f dalpha");
                let terminal: Vec<f64> = s
                    .terminal()
                    .into_iter()
                    .map(|v| if variation { v } else { v.abs() })
                    .collect();
                let (m, se) = mean_se(&terminal);
                deltas.push(from as f64 * tau);
                means.push(m);
                ses.push(se);
                finest = Some(s);
            }
            let diagnostic = pv_diagnostic(deltas, means, ses);
            Ok(AlphaIntegral {
                sample: finest.expect("ladder is non-empty"),
                diagnostic: Some(diagnostic),
            })
        }
    }
}

/// Extrapolates a ladder of integrals over shrinking windows and classifies it.
pub fn pv_diagnostic(deltas: Vec<f64>, values: Vec<f64>, standard_errors: Vec<f64>) -> PvDiagnostic {
    let bands: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let monotone = bands.iter().all(|b| *b > 0.0);
    let band_ratio = if monotone && bands.len() >= 2 {
        let idx: Vec<f64> = (0..bands.len()).map(|i| i as f64).collect();
        let logs: Vec<f64> = bands.iter().map(|b| b.ln()).collect();
        linear_fit(&idx, &logs).0.exp()
    } else {
        0.0
    };
    let n = values.len();
    let extrapolated = if n >= 3 {
        let (v1, v2, v3) = (values[n - 3], values[n - 2], values[n - 1]);
        let denom = (v3 - v2) - (v2 - v1);
        if denom.abs() > 1e-14 * v3.abs().max(1.0) {
            v3 - (v3 - v2).powi(2) / denom
        } else {
            v3
        }
    } else {
        values.last().copied().unwrap_or(0.0)
    };
    let divergent = monotone && band_ratio > PV_DIVERGENCE_RATIO;
    PvDiagnostic {
        deltas,
        values,
        standard_errors,
        band_ratio,
        extrapolated: if divergent { f64::INFINITY } else { extrapolated },
        divergent,
    }
}

/// `int f d*X = -int f dM - 2 int f dalpha - int f dN`, in forward time.
///
/// The factor 2 on the `alpha` term makes `int a^{-1} f d*X` agree with `int div f dtheta`
/// for smooth `f` under this `alpha` normalization.
pub fn star_integral(
    f: &dyn Integrand,
    parts: &Parts,
    e: &PathEnsemble,
    reversed: &ReversedEnsemble,
) -> Result<FunctionalSample> {
    let dm = forward_integral(f, &parts.m, e)?;
    let d = e.dim();
    check_components(&parts.alpha, d, e.n_paths, e.steps, Clock::Forward)?;
    let values = along_paths(f, e);
    let w = e.steps + 1;
    let da = with_flags(
        FunctionalSample::from_increments("int f dalpha", e.n_paths, e.steps, |j, k| {
            let fv = values[j * w + k];
            (0..d).map(|c| fv[c] * parts.alpha[c].increment(j, k)).sum()
        }),
        &parts.alpha,
    );
    let dn = backward_integral(f, &parts.n, reversed)?;
    let out = dm
        .combine(-1.0, &da, -2.0, "tmp")?
        .combine(1.0, &dn, -1.0, "int f d*X")?;
    Ok(out)
}
