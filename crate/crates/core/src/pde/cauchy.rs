use super::data::{DistributionData, WeakSolution};
use super::kernel::propagate_masses;
use super::propagator::{Propagator, Scheme};
use crate::error::{check_finite, invalid, Result};
use crate::field::SpaceTimeField;
use crate::model::{CoefficientField, Point, SpaceTimeGrid};
use crate::stats::trapezoid_weight;

/// Marches `du/dt + L_t u = -Phi`, `u(T) = phi` backward from `T` with the theta-scheme.
pub fn solve_cauchy(
    cf: &CoefficientField,
    data: &DistributionData,
    phi: &[f64],
    grid: &SpaceTimeGrid,
    scheme: Scheme,
) -> Result<WeakSolution> {
    let prop = Propagator::new(cf, grid, scheme)?;
    march(&prop, data, phi, None)
}

fn march(prop: &Propagator, data: &DistributionData, phi: &[f64], discount: Option<f64>) -> Result<WeakSolution> {
    let grid = prop.grid;
    let space = grid.space;
    if data.grid() != grid {
        return invalid("data live on a different grid");
    }
    if phi.len() != space.len() {
        return invalid(format!(
            "terminal condition has {} values for {} nodes",
            phi.len(),
            space.len()
        ));
    }
    check_finite("terminal condition", phi)?;
    let theta = prop.scheme.theta;
    let mut u = SpaceTimeField::zeros(grid, 0);
    u.slice_mut(grid.nt).copy_from_slice(phi);
    let mut next_load = data.load(grid.nt);
    for n in (0..grid.nt).rev() {
        let mut u_next = u.slice(n + 1).to_vec();
        for (idx, v) in u_next.iter_mut().enumerate() {
            if space.is_boundary(idx) {
                *v = 0.0;
            }
        }
        let load_now = data.load(n);
        let load: Vec<f64> = load_now
            .iter()
            .zip(&next_load)
            .map(|(a, b)| theta * a + (1.0 - theta) * b)
            .collect();
        let un = prop.step(n)?.backward(&u_next, Some((&load, grid.tau)))?;
        check_finite("cauchy solution", &un)?;
        u.slice_mut(n).copy_from_slice(&un);
        next_load = load_now;
    }
    let mut data = data.clone();
    if let Some(rate) = discount {
        // du/dt + L_t u = -(xi - rate u): fold the killing into the stored record
        for k in 0..=grid.nt {
            let us = u.slice(k).to_vec();
            for (f, v) in data.f0.slice_mut(k).iter_mut().zip(us) {
                *f -= rate * v;
            }
        }
    }
    Ok(WeakSolution {
        grad_u: u.gradient(),
        u,
        data,
        terminal: phi.to_vec(),
    })
}

/// `R_alpha xi(s, x) = E int_s^T e^{-alpha (theta - s)} xi(theta, X_theta) dtheta`, by solving
/// `du/dt + (L_t - alpha) u = -xi`, `u(T) = 0` backward.
pub fn resolvent(
    cf: &CoefficientField,
    xi: &SpaceTimeField,
    alpha: f64,
    grid: &SpaceTimeGrid,
    scheme: Scheme,
) -> Result<WeakSolution> {
    if !(alpha >= 0.0) {
        return invalid(format!("resolvent parameter must be nonnegative, got {alpha}"));
    }
    let prop = Propagator::with_killing(cf, grid, scheme, alpha)?;
    let data = DistributionData::new(xi.clone(), crate::field::VectorField::zeros(*grid, 0))?;
    march(&prop, &data, &vec![0.0; grid.space.len()], Some(alpha))
}

/// The same resolvent evaluated through the kernel: discounted occupation of `xi`
/// accumulated from node masses pushed forward from `(s, x)`, trapezoid in time.
pub fn resolvent_via_kernel(
    cf: &CoefficientField,
    xi: &SpaceTimeField,
    alpha: f64,
    s: f64,
    x: &Point,
    grid: &SpaceTimeGrid,
    scheme: Scheme,
) -> Result<f64> {
    if !(alpha >= 0.0) {
        return invalid(format!("resolvent parameter must be nonnegative, got {alpha}"));
    }
    let first = grid.time_index(s);
    let steps = grid.nt - first;
    let mut total = 0.0;
    propagate_masses(cf, grid, scheme, first, x, |k, mass| {
        let weight = trapezoid_weight(k - first, steps, grid.tau) * (-alpha * (grid.time(k) - grid.time(first))).exp();
        total += weight * mass.iter().zip(xi.slice(k)).map(|(m, v)| m * v).sum::<f64>();
    })?;
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::VectorField;
    use crate::model::SpaceGrid;

    fn bm_grid(nt: usize) -> SpaceTimeGrid {
        SpaceTimeGrid::new(SpaceGrid::cube(1, -6.0, 6.0, 241).unwrap(), 1.0, nt).unwrap()
    }

    fn interior_error(sol: &WeakSolution, radius: f64, exact: impl Fn(f64, f64) -> f64) -> f64 {
        let g = sol.grid();
        let mut worst = 0.0f64;
        for k in 0..=g.nt {
            for idx in 0..g.space.len() {
                let x = g.space.coord(idx)[0];
                if x.abs() <= radius {
                    worst = worst.max((sol.u.slice(k)[idx] - exact(g.time(k), x)).abs());
                }
            }
        }
        worst
    }

    #[test]
    fn constants_are_caloric() {
        let g = bm_grid(100);
        let cf = CoefficientField::identity(1);
        let sol = solve_cauchy(
            &cf,
            &DistributionData::zero(g),
            &vec![3.0; g.space.len()],
            &g,
            Scheme::IMPLICIT,
        )
        .unwrap();
        // Dirichlet killing is felt only within a few standard deviations of the box edge
        assert!(interior_error(&sol, 1.0, |_, _| 3.0) < 1e-5);
    }

    #[test]
    fn unit_source_gives_remaining_time() {
        let g = bm_grid(100);
        let cf = CoefficientField::identity(1);
        let data = DistributionData::from_fns(g, |_, _| 1.0, |_, _| [0.0; 2]).unwrap();
        let sol = solve_cauchy(&cf, &data, &vec![0.0; g.space.len()], &g, Scheme::IMPLICIT).unwrap();
        assert!(interior_error(&sol, 1.0, |t, _| 1.0 - t) < 1e-5);
    }

    #[test]
    fn heat_semigroup_on_gaussian() {
        // E exp(-(x + W_r)^2) = (1 + 2r)^{-1/2} exp(-x^2 / (1 + 2r)), r = T - t
        let g = bm_grid(200);
        let cf = CoefficientField::identity(1);
        let phi: Vec<f64> = (0..g.space.len())
            .map(|i| (-g.space.coord(i)[0].powi(2)).exp())
            .collect();
        let sol = solve_cauchy(&cf, &DistributionData::zero(g), &phi, &g, Scheme::CRANK_NICOLSON).unwrap();
        let err = interior_error(&sol, 3.0, |t, x| {
            let r = 1.0 - t;
            (1.0 + 2.0 * r).powf(-0.5) * (-x * x / (1.0 + 2.0 * r)).exp()
        });
        assert!(err < 2e-3, "{err}");
        assert_eq!(sol.u.slice(g.nt), &phi[..]);
    }

    #[test]
    fn divergence_data_matches_equivalent_f0() {
        // fbar = (x, 0) has div fbar = 1, the same load as f0 = 1
        let g = bm_grid(50);
        let cf = CoefficientField::identity(1);
        let zero = vec![0.0; g.space.len()];
        let a = DistributionData::from_fns(g, |_, _| 1.0, |_, _| [0.0; 2]).unwrap();
        let b = DistributionData::new(
            SpaceTimeField::zeros(g, 0),
            VectorField::from_fn(g, 0, |_, x| [x[0], 0.0]),
        )
        .unwrap();
        let ua = solve_cauchy(&cf, &a, &zero, &g, Scheme::IMPLICIT).unwrap();
        let ub = solve_cauchy(&cf, &b, &zero, &g, Scheme::IMPLICIT).unwrap();
        for (x, y) in ua.u.data.iter().zip(&ub.u.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn resolvent_routes_agree_on_unit_source() {
        let g = bm_grid(200);
        let cf = CoefficientField::identity(1);
        let one = SpaceTimeField::from_space_fn(g, |_| 1.0);
        for alpha in [0.0, 0.5, 2.0] {
            let sol = resolvent(&cf, &one, alpha, &g, Scheme::IMPLICIT).unwrap();
            let exact = if alpha == 0.0 {
                1.0
            } else {
                (1.0 - (-alpha).exp()) / alpha
            };
            let centre = g.space.nearest(&[0.0, 0.0]).unwrap();
            let pde = sol.u.slice(0)[centre];
            let via_kernel = resolvent_via_kernel(&cf, &one, alpha, 0.0, &[0.0, 0.0], &g, Scheme::IMPLICIT).unwrap();
            assert!((pde - exact).abs() < 5e-3, "alpha {alpha}: {pde} vs {exact}");
            assert!(
                (via_kernel - exact).abs() < 5e-3,
                "alpha {alpha}: {via_kernel} vs {exact}"
            );
        }
        let zero = SpaceTimeField::zeros(g, 0);
        assert_eq!(
            resolvent(&cf, &zero, 1.0, &g, Scheme::IMPLICIT).unwrap().u.max_abs(),
            0.0
        );
        assert!(resolvent(&cf, &zero, -1.0, &g, Scheme::IMPLICIT).is_err());
    }

    #[test]
    fn linear_in_data_and_terminal() {
        let g = bm_grid(40);
        let cf = CoefficientField::identity(1);
        let d1 = DistributionData::from_fns(g, |t, x| (x[0] + t).sin(), |_, x| [x[0].cos(), 0.0]).unwrap();
        let d2 = DistributionData::from_fns(g, |_, x| x[0] * 0.1, |t, _| [t, 0.0]).unwrap();
        let p1: Vec<f64> = (0..g.space.len()).map(|i| (-g.space.coord(i)[0].abs()).exp()).collect();
        let p2: Vec<f64> = (0..g.space.len()).map(|i| g.space.coord(i)[0].cos()).collect();
        let s1 = solve_cauchy(&cf, &d1, &p1, &g, Scheme::IMPLICIT).unwrap();
        let s2 = solve_cauchy(&cf, &d2, &p2, &g, Scheme::IMPLICIT).unwrap();
        let psum: Vec<f64> = p1.iter().zip(&p2).map(|(a, b)| a + b).collect();
        let s12 = solve_cauchy(&cf, &d1.add(&d2).unwrap(), &psum, &g, Scheme::IMPLICIT).unwrap();
        for ((a, b), c) in s1.u.data.iter().zip(&s2.u.data).zip(&s12.u.data) {
            assert!((a + b - c).abs() < 1e-11);
        }
    }
}
