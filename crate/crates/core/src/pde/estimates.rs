use super::data::WeakSolution;
use super::kernel::TransitionKernel;
use crate::error::{invalid, Result};
use crate::model::{weighted_norm, weighted_norm_range, weighted_space_norm, Weight};
use crate::report::BoundReport;

/// Empirical constant for the energy a-priori bound. Calibrated on the smooth data battery,
/// whose ratios stay below 3 for `T <= 1`.
pub const APRIORI_CONSTANT: f64 = 10.0;

/// `sup_t ||u(t)||^2 + ||grad u||^2` against `||phi||^2 + (||f0|| + ||fbar||)^2`, all `rho`-weighted.
pub fn check_apriori(sol: &WeakSolution, w: &Weight) -> Result<BoundReport> {
    let g = sol.grid();
    let sup_u = (0..=g.nt)
        .map(|k| weighted_space_norm(&g.space, sol.u.slice(k), w, 2.0).powi(2))
        .fold(0.0f64, f64::max);
    let grad = weighted_norm(&sol.grad_u.magnitude(), w, 2.0, 2.0)?.powi(2);
    let phi = weighted_space_norm(&g.space, &sol.terminal, w, 2.0).powi(2);
    let data = sol.data.dual_norm_bound(w)?.powi(2);
    let lhs = sup_u + grad;
    let rhs = phi + data;
    let ratio = if lhs == 0.0 && rhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(BoundReport::at_most("apriori", ratio, APRIORI_CONSTANT)
        .with("lhs", lhs)
        .with("rhs", rhs)
        .with("sup_u", sup_u)
        .with("grad_u", grad)
        .with("phi", phi)
        .with("data", data))
}

fn conjugate(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else if p == 1.0 {
        f64::INFINITY
    } else {
        p / (p - 1.0)
    }
}

/// Mixed norms `||p||_{p', q', 1/rho}` and `||grad p||_{(2p)', (2q)', 1/rho}` over `t >= s + delta`,
/// plus the tightest Gaussian envelope `p <= c1 (t-s)^{-d/2} exp(-|y-x|^2 / (c2 (t-s)))`.
pub fn check_aronson(k: &TransitionKernel, w: &Weight, p_exp: f64, q_exp: f64, delta: f64) -> Result<BoundReport> {
    let g = k.grid();
    let d = g.dim() as f64;
    if !(p_exp >= 1.0 && q_exp >= 1.0) {
        return invalid("exponents must be at least 1");
    }
    let condition = d / (2.0 * p_exp) + 1.0 / q_exp;
    if condition >= 1.0 {
        return invalid(format!("exponent condition d/(2p) + 1/q < 1 fails: {condition}"));
    }
    let from = g.time_index(k.source_time + delta).max(k.first() + 1);
    let inv = w.inverse();
    let p_norm = weighted_norm_range(&k.p, &inv, conjugate(p_exp), conjugate(q_exp), from, g.nt)?;
    let grad_norm = weighted_norm_range(
        &k.grad_p.magnitude(),
        &inv,
        conjugate(2.0 * p_exp),
        conjugate(2.0 * q_exp),
        from,
        g.nt,
    )?;
    let (c1, c2) = gaussian_envelope(k, from);
    let finite = p_norm.is_finite() && grad_norm.is_finite();
    let mut report = BoundReport::new("aronson", p_norm + grad_norm, f64::INFINITY, 0.0, finite)
        .with("p_norm", p_norm)
        .with("grad_norm", grad_norm)
        .with("envelope_c1", c1)
        .with("envelope_c2", c2)
        .with("exponent_condition", condition)
        .with("delta", delta);
    if !finite {
        report = report.note("non-finite mixed norm");
    }
    Ok(report)
}

/// Smallest `c1 = sup p (t-s)^{d/2}` and, given `c1`, the smallest spread `c2`.
fn gaussian_envelope(k: &TransitionKernel, from: usize) -> (f64, f64) {
    let g = k.grid();
    let d = g.dim() as i32;
    let x = k.source_point;
    let mut c1 = 0.0f64;
    for step in from..=g.nt {
        let dt = g.time(step) - k.source_time;
        let peak = k.p.slice(step).iter().fold(0.0f64, |a, v| a.max(*v));
        c1 = c1.max(peak * dt.powf(d as f64 / 2.0));
    }
    let mut c2 = 0.0f64;
    for step in from..=g.nt {
        let dt = g.time(step) - k.source_time;
        let slice = k.p.slice(step);
        let peak = slice.iter().fold(0.0f64, |a, v| a.max(*v));
        for (idx, v) in slice.iter().enumerate() {
            // the far tail of the discrete kernel is below any meaningful resolution
            if *v <= 1e-8 * peak {
                continue;
            }
            let y = g.space.coord(idx);
            let r2: f64 = (0..g.dim()).map(|c| (y[c] - x[c]).powi(2)).sum();
            let log_ratio = (c1 * dt.powf(-(d as f64) / 2.0) / v).ln();
            if r2 > 0.0 && log_ratio > 0.0 {
                c2 = c2.max(r2 / (dt * log_ratio));
            }
        }
    }
    (c1, c2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CoefficientField, SpaceGrid, SpaceTimeGrid};
    use crate::pde::{fundamental_solution, solve_cauchy, DistributionData, KernelOptions, Scheme};

    fn bm_kernel() -> TransitionKernel {
        let g = SpaceTimeGrid::new(SpaceGrid::cube(1, -6.0, 6.0, 241).unwrap(), 1.0, 400).unwrap();
        fundamental_solution(
            &CoefficientField::identity(1),
            0.0,
            &[0.0, 0.0],
            &g,
            KernelOptions {
                scheme: Scheme::CRANK_NICOLSON,
                ..Default::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_data_ratio_zero() {
        let g = SpaceTimeGrid::new(SpaceGrid::cube(1, -3.0, 3.0, 31).unwrap(), 1.0, 10).unwrap();
        let sol = solve_cauchy(
            &CoefficientField::identity(1),
            &DistributionData::zero(g),
            &vec![0.0; g.space.len()],
            &g,
            Scheme::IMPLICIT,
        )
        .unwrap();
        let r = check_apriori(&sol, &Weight::new(1.0, 1)).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn envelope_constant_of_gaussian() {
        let k = bm_kernel();
        let r = check_aronson(&k, &Weight::new(1.0, 1), f64::INFINITY, f64::INFINITY, 0.05).unwrap();
        let c1 = r.values["envelope_c1"];
        let exact = (2.0 * std::f64::consts::PI).powf(-0.5);
        assert!((c1 - exact).abs() < 0.1 * exact, "{c1}");
    }

    #[test]
    fn mixed_norms_finite_and_condition_enforced() {
        let k = bm_kernel();
        let w = Weight::new(1.0, 1);
        let r = check_aronson(&k, &w, 2.0, 4.0, 0.05).unwrap();
        assert!(r.pass && r.values["p_norm"] > 0.0 && r.values["grad_norm"] > 0.0);
        assert!(check_aronson(&k, &w, 1.0, 2.0, 0.05).is_err());
    }
}
