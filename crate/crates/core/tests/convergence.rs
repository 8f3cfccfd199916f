//! Star integrals of mollified step fields converge to the star integral of the step field.

use divlab::calculus::{extract_parts, quadratic_variation, star_integral, FnIntegrand, FunctionalSample};
use divlab::model::{
    dyadic_partitions, weighted_space_norm, CoefficientField, Point, SpaceGrid, SpaceTimeGrid, Weight,
};
use divlab::paths::StepKernels;
use divlab::pde::{fundamental_solution, KernelOptions, Scheme};
use statrs::function::erf::erf;

const WIDTHS: [f64; 4] = [0.8, 0.4, 0.2, 0.1];

fn mean_sup(diff: &FunctionalSample) -> f64 {
    let paths: Vec<usize> = diff.active_paths().collect();
    let total: f64 = paths
        .iter()
        .map(|&j| (0..=diff.steps).fold(0.0f64, |m, k| m.max(diff.value(j, k).abs())))
        .sum();
    total / paths.len() as f64
}

#[test]
fn mollified_star_integrals_converge() {
    let cf = CoefficientField::identity(1);
    let grid = SpaceTimeGrid::new(SpaceGrid::cube(1, -5.0, 5.0, 201).unwrap(), 1.0, 256).unwrap();
    let start: Point = [0.0, 0.0];
    let options = KernelOptions {
        scheme: Scheme::CRANK_NICOLSON,
        ..Default::default()
    };
    let kernel = fundamental_solution(&cf, 0.0, &start, &grid, options).unwrap();
    let e = StepKernels::new(&cf, &grid, Scheme::CRANK_NICOLSON)
        .unwrap()
        .sample(0.0, &start, 500, grid.nt, 29)
        .unwrap();
    let r = e.reverse();
    let parts = extract_parts(&e, &kernel, &cf).unwrap();
    let partitions = dyadic_partitions(0.0, 1.0, 8).unwrap();

    // identity diffusion, so the inverse-diffusion factor is trivial
    let step = FnIntegrand(|_: f64, x: &Point| [x[0].signum(), 0.0]);
    let limit = star_integral(&step, &parts, &e, &r).unwrap();
    let weight = Weight::new(1.0, 1);
    let space = grid.space;

    let mut sups = Vec::new();
    let mut qvs = Vec::new();
    let mut gaps = Vec::new();
    for width in WIDTHS {
        let smooth = FnIntegrand(move |_: f64, x: &Point| [erf(x[0] / (width * std::f64::consts::SQRT_2)), 0.0]);
        let diff = star_integral(&smooth, &parts, &e, &r)
            .unwrap()
            .combine(1.0, &limit, -1.0, "difference")
            .unwrap();
        sups.push(mean_sup(&diff));
        let qv = quadratic_variation(&diff, &partitions, &e).unwrap();
        qvs.push(*qv.qv_mean.last().unwrap());
        let gap: Vec<f64> = (0..space.len())
            .map(|i| {
                let x = space.coord(i)[0];
                erf(x / (width * std::f64::consts::SQRT_2)) - x.signum()
            })
            .collect();
        gaps.push(weighted_space_norm(&space, &gap, &weight, 2.0));
    }
    eprintln!("sup {sups:?}\nqv {qvs:?}\ngap {gaps:?}");
    for w in sups.windows(2) {
        assert!(w[1] < w[0], "E sup distance must shrink: {sups:?}");
    }
    for (q, g) in qvs.windows(2).zip(gaps.windows(2)) {
        assert!(g[1] < g[0]);
        assert!(q[1] < q[0], "QV must follow the weighted gap: {qvs:?} vs {gaps:?}");
    }
}
