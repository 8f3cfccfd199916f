//! Forward and backward martingale parts of the coordinate process, the density drift,
//! forward, backward and star integrals, and variation estimators.

mod integrals;
mod parts;
mod sample;
mod variation;

pub use integrals::{
    alpha_integral, backward_integral, forward_integral, pv_diagnostic, star_integral, AlphaIntegral, AlphaMode,
    InverseDiffusion, PvDiagnostic, PV_DIVERGENCE_RATIO, PV_LADDER,
};
pub use parts::{extract_parts, Parts, SURROGATE_SPREAD};
pub(crate) use sample::along_paths;
pub use sample::{Clock, FnIntegrand, FunctionalSample, Integrand};
pub(crate) use variation::variation_ladder;
pub use variation::{
    covariation_check, martingale_test, quadratic_variation, reversed_covariation_check, QVReport, MARTINGALE_BINS,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{dyadic_partitions, CoefficientField, Point, SpaceGrid, SpaceTimeGrid};
    use crate::paths::{PathEnsemble, StepKernels};
    use crate::pde::{fundamental_solution, KernelOptions, Scheme, TransitionKernel};
    use crate::stats::mean_se;

    struct Setup {
        cf: CoefficientField,
        kernel: TransitionKernel,
        e: PathEnsemble,
        parts: Parts,
    }

    fn brownian(n_paths: usize, nt: usize, seed: u64) -> Setup {
        let cf = CoefficientField::identity(1);
        let g = SpaceTimeGrid::new(SpaceGrid::cube(1, -5.0, 5.0, 201).unwrap(), 1.0, nt).unwrap();
        let options = KernelOptions {
            scheme: Scheme::CRANK_NICOLSON,
            ..Default::default()
        };
        let kernel = fundamental_solution(&cf, 0.0, &[0.0, 0.0], &g, options).unwrap();
        let steps = StepKernels::new(&cf, &g, Scheme::CRANK_NICOLSON).unwrap();
        let e = steps.sample(0.0, &[0.0, 0.0], n_paths, nt, seed).unwrap();
        let parts = extract_parts(&e, &kernel, &cf).unwrap();
        Setup { cf, kernel, e, parts }
    }

    fn identity() -> FnIntegrand<impl Fn(f64, &Point) -> Point + Sync> {
        FnIntegrand(|_t: f64, x: &Point| [x[0], 0.0])
    }

    #[test]
    fn alpha_matches_brownian_closed_form() {
        // for BM from 0 the density drift is 1/2 int (x - X_theta)/(theta - s) dtheta
        let s = brownian(400, 256, 1);
        let tau = s.e.grid.tau;
        let mut worst: f64 = 0.0;
        for j in 0..s.e.n_paths {
            let closed: f64 = (8..256)
                .map(|k| {
                    let left = -s.e.point(j, k)[0] / s.e.time(k);
                    let right = -s.e.point(j, k + 1)[0] / s.e.time(k + 1);
                    0.25 * tau * (left + right)
                })
                .sum();
            let ours = s.parts.alpha[0].between(j, 8, 256);
            worst = worst.max((ours - closed).abs());
        }
        assert!(worst < 0.02, "{worst}");
        assert!(s.parts.beta[0].values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn martingale_parts_have_brownian_brackets() {
        let s = brownian(2000, 256, 2);
        let r = s.e.reverse();
        let m = covariation_check(&s.parts.m, &s.cf, &s.e).unwrap();
        assert!(m.pass, "{m:?}");
        let b = covariation_check(&s.parts.b, &s.cf, &s.e).unwrap();
        assert!(b.pass, "{b:?}");
        let n = reversed_covariation_check(&s.parts.n, &s.cf, &r).unwrap();
        assert!(n.pass, "{n:?}");
    }

    #[test]
    fn conditional_means_vanish() {
        let s = brownian(4000, 256, 3);
        let states: Vec<f64> = (0..s.e.n_paths).map(|j| s.e.point(j, 64)[0]).collect();
        let m = martingale_test(&s.parts.m[0], &states, 64, 256).unwrap();
        assert!(m.pass, "{m:?}");
        // N runs on the reversed clock: condition on the reversed state at reversed index 64
        let r = s.e.reverse();
        let rstates: Vec<f64> = (0..r.n_paths).map(|j| r.point(j, 64)[0]).collect();
        let n = martingale_test(&s.parts.n[0], &rstates, 64, 192).unwrap();
        assert!(n.pass, "{n:?}");
    }

    #[test]
    fn decomposition_closes() {
        // dX = 1/2 dM + 1/2 dN - dalpha + dbeta, with dN the backward increment over each forward step
        let s = brownian(50, 256, 4);
        for j in 0..50 {
            for k in 0..256 {
                let n_step = s.parts.n_step(0, j, k);
                let rebuilt = 0.5 * s.parts.m[0].increment(j, k) + 0.5 * n_step - s.parts.alpha[0].increment(j, k)
                    + s.parts.beta[0].increment(j, k);
                assert!((rebuilt - s.e.increment(j, k)[0]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_integral_isometry() {
        let s = brownian(4000, 256, 5);
        let zero = FnIntegrand(|_: f64, _: &Point| [0.0, 0.0]);
        assert!(forward_integral(&zero, &s.parts.m, &s.e)
            .unwrap()
            .values
            .iter()
            .all(|v| *v == 0.0));
        let c = FnIntegrand(|_: f64, _: &Point| [2.5, 0.0]);
        let cm = forward_integral(&c, &s.parts.m, &s.e).unwrap();
        for j in 0..10 {
            assert!((cm.value(j, 256) - 2.5 * s.parts.m[0].value(j, 256)).abs() < 1e-12);
        }
        let xm = forward_integral(&identity(), &s.parts.m, &s.e).unwrap();
        let (mean, se) = xm.mean_at(256);
        assert!(mean.abs() < 3.0 * se);
        let sq: Vec<f64> = xm.terminal().iter().map(|v| v * v).collect();
        let (m2, se2) = mean_se(&sq);
        assert!((m2 - 0.5).abs() < 3.0 * se2 + 0.01, "{m2} +- {se2}");
    }

    #[test]
    fn star_integral_matches_divergence() {
        let s = brownian(2000, 256, 6);
        let r = s.e.reverse();
        let f = identity();
        let inv = InverseDiffusion { cf: &s.cf, inner: &f };
        let star = star_integral(&inv, &s.parts, &s.e, &r).unwrap();
        let (m, se) = star.mean_at(256);
        assert!((m - 1.0).abs() < 3.0 * se + 0.05, "{m} +- {se}");
        let (half, se_half) = star.mean_at(128);
        assert!((half - 0.5).abs() < 3.0 * se_half + 0.05, "{half}");
        let c = FnIntegrand(|_: f64, _: &Point| [1.5, 0.0]);
        let star_c = star_integral(&c, &s.parts, &s.e, &r).unwrap();
        let (mc, sec) = star_c.mean_at(256);
        assert!(mc.abs() < 3.0 * sec + 1e-3, "{mc} +- {sec}");
    }

    #[test]
    fn integrals_are_linear() {
        let s = brownian(100, 256, 7);
        let r = s.e.reverse();
        let f = identity();
        let g = FnIntegrand(|t: f64, x: &Point| [t - x[0] * x[0], 0.0]);
        let fg = FnIntegrand(|t: f64, x: &Point| [2.0 * x[0] - 3.0 * (t - x[0] * x[0]), 0.0]);
        let a = star_integral(&f, &s.parts, &s.e, &r).unwrap();
        let b = star_integral(&g, &s.parts, &s.e, &r).unwrap();
        let ab = star_integral(&fg, &s.parts, &s.e, &r).unwrap();
        let combo = a.combine(2.0, &b, -3.0, "combo").unwrap();
        for (x, y) in ab.values.iter().zip(&combo.values) {
            assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn density_drift_variation_closed_form() {
        // E int_0^1 f(theta) d|alpha| = (2 pi)^{-1/2} int f(theta) theta^{-1/2} dtheta
        let s = brownian(2000, 512, 8);
        let c = (2.0 * std::f64::consts::PI).powf(-0.5);
        let one = FnIntegrand(|_: f64, _: &Point| [1.0, 0.0]);
        let v = alpha_integral(&one, &s.parts.alpha, &s.e, AlphaMode::Variation).unwrap();
        let (m, se) = v.sample.mean_at(512);
        let target = 2.0 * c;
        assert!((m - target).abs() < 3.0 * se + 0.05 * target, "{m} vs {target}");
        let lin = FnIntegrand(|t: f64, _: &Point| [t, 0.0]);
        let v = alpha_integral(&lin, &s.parts.alpha, &s.e, AlphaMode::Variation).unwrap();
        let (m, se) = v.sample.mean_at(512);
        let target = 2.0 / 3.0 * c;
        assert!((m - target).abs() < 3.0 * se + 0.05 * target, "{m} vs {target}");
    }

    #[test]
    fn principal_value_ladder_verdicts() {
        let s = brownian(1000, 512, 9);
        let one = FnIntegrand(|_: f64, _: &Point| [1.0, 0.0]);
        let ok = alpha_integral(
            &one,
            &s.parts.alpha,
            &s.e,
            AlphaMode::PrincipalValue { variation: true },
        )
        .unwrap();
        let d = ok.diagnostic.unwrap();
        assert!(!d.divergent, "{d:?}");
        assert!(
            (d.extrapolated - 2.0 * (2.0 * std::f64::consts::PI).powf(-0.5)).abs() < 0.06,
            "{d:?}"
        );
        let rough = FnIntegrand(|t: f64, _: &Point| [t.powf(-0.5) * t.ln().abs().max(1e-3).powf(-0.6), 0.0]);
        let bad = alpha_integral(
            &rough,
            &s.parts.alpha,
            &s.e,
            AlphaMode::PrincipalValue { variation: true },
        )
        .unwrap();
        let d = bad.diagnostic.unwrap();
        assert!(d.divergent, "{d:?}");
        assert!(alpha_integral(&one, &s.parts.alpha, &s.e, AlphaMode::Plain { from: 0 }).is_err());
    }

    #[test]
    fn linear_functional_qv_slope() {
        let s = brownian(20, 256, 10);
        let lin = FunctionalSample::from_increments("t", 20, 256, |_, _| 1.0 / 256.0);
        let parts = dyadic_partitions(0.0, 1.0, 7).unwrap();
        let q = quadratic_variation(&lin, &parts, &s.e).unwrap();
        assert!((q.qv_slope + 1.0).abs() < 1e-9, "{}", q.qv_slope);
        assert!(q.tv_slope.abs() < 1e-9);
        for (m, mesh) in q.qv_mean.iter().zip(&q.meshes) {
            assert!((m - mesh).abs() < 1e-12);
        }
        let mq = quadratic_variation(&s.parts.m[0], &parts, &s.e).unwrap();
        assert!(mq.qv_slope.abs() < 0.2, "{}", mq.qv_slope);
        let _ = &s.kernel;
    }
}
