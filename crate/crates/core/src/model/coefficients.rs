use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::grid::{Mat2, Point, SpaceTimeGrid};
use crate::error::{invalid, Error, Result};

/// Named coefficient families selectable from an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum Preset {
    /// `a = scale * I`, constant drift.
    Identity {
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        drift: Vec<f64>,
    },
    /// `a = diag(diag)`, constant drift.
    Diagonal {
        diag: Vec<f64>,
        #[serde(default)]
        drift: Vec<f64>,
    },
    /// `a = (base + amp * sin(freq * x_1 + omega * t)) * I`.
    ScalarSine {
        #[serde(default = "one")]
        base: f64,
        #[serde(default = "half")]
        amp: f64,
        #[serde(default = "one")]
        freq: f64,
        #[serde(default)]
        omega: f64,
        #[serde(default)]
        drift: Vec<f64>,
    },
    /// Piecewise-constant `a = low * I` or `high * I` on a checkerboard of side `cell`.
    Checkerboard {
        low: f64,
        high: f64,
        #[serde(default = "one")]
        cell: f64,
        #[serde(default)]
        drift: Vec<f64>,
    },
    /// Arbitrary constant matrix, stored row-major. Used to exercise validation.
    Constant {
        a: Vec<f64>,
        #[serde(default)]
        drift: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

/// Operator data `a`, `b` with ellipticity constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientField {
    pub dim: usize,
    pub preset: Preset,
    pub lambda: f64,
    pub upper: f64,
    pub drift_bound: f64,
}

impl CoefficientField {
    pub fn new(dim: usize, preset: Preset, lambda: f64, upper: f64, drift_bound: f64) -> Result<Self> {
        if dim == 0 || dim > 2 {
            return invalid(format!("dimension must be 1 or 2, got {dim}"));
        }
        if !(lambda > 0.0 && upper >= lambda && drift_bound >= 0.0) {
            return invalid(format!(
                "need 0 < lambda <= Lambda and Lambda1 >= 0, got ({lambda}, {upper}, {drift_bound})"
            ));
        }
        let cf = Self {
            dim,
            preset,
            lambda,
            upper,
            drift_bound,
        };
        cf.check_shapes()?;
        Ok(cf)
    }

    /// Builds the field with the tightest bounds implied by the preset parameters.
    pub fn from_preset(dim: usize, preset: Preset) -> Result<Self> {
        let (lo, hi) = match &preset {
            Preset::Identity { scale, .. } => (*scale, *scale),
            Preset::Diagonal { diag, .. } => diag
                .iter()
                .take(dim)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v))),
            Preset::ScalarSine { base, amp, .. } => (base - amp.abs(), base + amp.abs()),
            Preset::Checkerboard { low, high, .. } => (low.min(*high), low.max(*high)),
            Preset::Constant { a, .. } => {
                let m = constant_matrix(dim, a)?;
                let (e0, e1) = sym_eigen(dim, &m).0;
                (e0.min(e1), e0.max(e1))
            }
        };
        let drift = preset_drift(&preset);
        let b1 = drift.iter().take(dim).fold(0.0f64, |m, v| m.max(v.abs()));
        // Validation reports the violation for indefinite matrices; keep the constructor total.
        let lambda = if lo > 0.0 { lo } else { f64::MIN_POSITIVE };
        Self::new(dim, preset, lambda, hi.max(lambda), b1)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_preset(
            dim,
            Preset::Identity {
                scale: 1.0,
                drift: vec![],
            },
        )
        .expect("identity preset is valid")
    }

    fn check_shapes(&self) -> Result<()> {
        let drift = preset_drift(&self.preset);
        if !drift.is_empty() && drift.len() != self.dim {
            return invalid(format!("drift has {} entries for dimension {}", drift.len(), self.dim));
        }
        match &self.preset {
            Preset::Diagonal { diag, .. } if diag.len() != self.dim => {
                invalid("diagonal preset needs one entry per axis")
            }
            Preset::Constant { a, .. } => constant_matrix(self.dim, a).map(|_| ()),
            Preset::Checkerboard { cell, .. } if !(*cell > 0.0) => invalid("checkerboard cell must be positive"),
            _ => Ok(()),
        }
    }

    pub fn is_time_homogeneous(&self) -> bool {
        !matches!(self.preset, Preset::ScalarSine { omega, .. } if omega != 0.0)
    }

    /// True when `a` is a constant multiple of the identity and `b = 0`.
    pub fn is_standard_brownian(&self) -> bool {
        matches!(&self.preset, Preset::Identity { scale, drift } if *scale == 1.0 && drift.iter().all(|d| *d == 0.0))
    }

    pub fn a(&self, t: f64, x: &Point) -> Mat2 {
        let scalar = |s: f64| {
            let mut m = [[0.0; 2]; 2];
            for (i, row) in m.iter_mut().enumerate().take(self.dim) {
                row[i] = s;
            }
            m
        };
        match &self.preset {
            Preset::Identity { scale, .. } => scalar(*scale),
            Preset::Diagonal { diag, .. } => {
                let mut m = [[0.0; 2]; 2];
                for i in 0..self.dim {
                    m[i][i] = diag[i];
                }
                m
            }
            Preset::ScalarSine {
                base, amp, freq, omega, ..
            } => scalar(base + amp * (freq * x[0] + omega * t).sin()),
            Preset::Checkerboard { low, high, cell, .. } => {
                let parity: i64 = (0..self.dim).map(|k| (x[k] / cell).floor() as i64).sum();
                scalar(if parity.rem_euclid(2) == 0 { *low } else { *high })
            }
            Preset::Constant { a, .. } => constant_matrix(self.dim, a).expect("validated at construction"),
        }
    }

    pub fn b(&self, _t: f64, _x: &Point) -> Point {
        let d = preset_drift(&self.preset);
        let mut out = [0.0; 2];
        for (o, v) in out.iter_mut().zip(d) {
            *o = *v;
        }
        out
    }

    /// Symmetric positive square root of `a`.
    pub fn sigma(&self, t: f64, x: &Point) -> Mat2 {
        sym_sqrt(self.dim, &self.a(t, x))
    }

    pub fn a_inv(&self, t: f64, x: &Point) -> Result<Mat2> {
        invert(self.dim, &self.a(t, x))
    }

    pub fn sigma_inv(&self, t: f64, x: &Point) -> Result<Mat2> {
        invert(self.dim, &self.sigma(t, x))
    }
}

fn preset_drift(p: &Preset) -> &[f64] {
    match p {
        Preset::Identity { drift, .. }
        | Preset::Diagonal { drift, .. }
        | Preset::ScalarSine { drift, .. }
        | Preset::Checkerboard { drift, .. }
        | Preset::Constant { drift, .. } => drift,
    }
}

fn constant_matrix(dim: usize, a: &[f64]) -> Result<Mat2> {
    if a.len() != dim * dim {
        return invalid(format!("constant preset needs {} entries, got {}", dim * dim, a.len()));
    }
    let mut m = [[0.0; 2]; 2];
    for i in 0..dim {
        for j in 0..dim {
            m[i][j] = a[i * dim + j];
        }
    }
    Ok(m)
}

/// Eigenvalues (ascending) and unit eigenvectors of the symmetric part of `m`.
pub fn sym_eigen(dim: usize, m: &Mat2) -> ((f64, f64), [Point; 2]) {
    if dim == 1 {
        return ((m[0][0], m[0][0]), [[1.0, 0.0], [0.0, 1.0]]);
    }
    let a = m[0][0];
    let d = m[1][1];
    let b = 0.5 * (m[0][1] + m[1][0]);
    let mean = 0.5 * (a + d);
    let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let (l0, l1) = (mean - r, mean + r);
    let v1 = if b.abs() > 1e-300 {
        let v = [l1 - d, b];
        let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
        [v[0] / n, v[1] / n]
    } else if a >= d {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    let v0 = [-v1[1], v1[0]];
    ((l0, l1), [v0, v1])
}

/// Symmetric square root via the eigendecomposition; negative eigenvalues are clipped to zero.
pub fn sym_sqrt(dim: usize, m: &Mat2) -> Mat2 {
    if dim == 1 {
        return [[m[0][0].max(0.0).sqrt(), 0.0], [0.0, 0.0]];
    }
    let ((l0, l1), [v0, v1]) = sym_eigen(dim, m);
    let (s0, s1) = (l0.max(0.0).sqrt(), l1.max(0.0).sqrt());
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = s0 * v0[i] * v0[j] + s1 * v1[i] * v1[j];
        }
    }
    out
}

pub fn invert(dim: usize, m: &Mat2) -> Result<Mat2> {
    if dim == 1 {
        if m[0][0] == 0.0 || !m[0][0].is_finite() {
            return Err(Error::Singular("1x1 coefficient is zero".into()));
        }
        return Ok([[1.0 / m[0][0], 0.0], [0.0, 0.0]]);
    }
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() < 1e-300 || !det.is_finite() {
        return Err(Error::Singular(format!("determinant {det:e}")));
    }
    Ok([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Smallest Rayleigh quotient over sampled points and probe directions.
    pub min_rayleigh: f64,
    pub max_rayleigh: f64,
    /// Extreme eigenvalues of `a` over the sampled points.
    pub min_eigen: f64,
    pub max_eigen: f64,
    pub drift_sup: f64,
    pub max_asymmetry: f64,
    pub max_sigma_error: f64,
    pub points_checked: usize,
    pub pass: bool,
    pub failures: Vec<String>,
}

/// Probe directions: the axis vectors plus 8 seeded random unit vectors.
pub fn probe_directions(dim: usize) -> Vec<Point> {
    let mut out = Vec::new();
    for k in 0..dim {
        let mut e = [0.0; 2];
        e[k] = 1.0;
        out.push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    for _ in 0..8 {
        let mut v = [0.0; 2];
        loop {
            for c in v.iter_mut().take(dim) {
                *c = rng.gen_range(-1.0..1.0);
            }
            let n = v.iter().take(dim).map(|c| c * c).sum::<f64>().sqrt();
            if n > 1e-3 {
                for c in v.iter_mut().take(dim) {
                    *c /= n;
                }
                break;
            }
        }
        out.push(v);
    }
    out
}

/// Scans `a` and `b` over every grid node and time, checking ellipticity, symmetry,
/// the drift bound and `sigma sigma^T = a`.
pub fn validate_ellipticity(cf: &CoefficientField, grid: &SpaceTimeGrid) -> Result<ValidationReport> {
    let dim = cf.dim;
    if grid.dim() != dim {
        return invalid("grid and coefficient dimensions differ");
    }
    let probes = probe_directions(dim);
    let times: Vec<usize> = if cf.is_time_homogeneous() {
        vec![0]
    } else {
        (0..=grid.nt).collect()
    };
    let mut rep = ValidationReport {
        min_rayleigh: f64::INFINITY,
        max_rayleigh: f64::NEG_INFINITY,
        min_eigen: f64::INFINITY,
        max_eigen: f64::NEG_INFINITY,
        drift_sup: 0.0,
        max_asymmetry: 0.0,
        max_sigma_error: 0.0,
        points_checked: 0,
        pass: true,
        failures: vec![],
    };
    for &k in &times {
        let t = grid.time(k);
        for idx in 0..grid.space.len() {
            let x = grid.space.coord(idx);
            let a = cf.a(t, &x);
            let b = cf.b(t, &x);
            for i in 0..dim {
                for j in 0..dim {
                    if !a[i][j].is_finite() {
                        return Err(Error::NonFinite {
                            what: "diffusion coefficient",
                            index: idx,
                        });
                    }
                }
                if !b[i].is_finite() {
                    return Err(Error::NonFinite {
                        what: "drift coefficient",
                        index: idx,
                    });
                }
                rep.drift_sup = rep.drift_sup.max(b[i].abs());
            }
            if dim == 2 {
                rep.max_asymmetry = rep.max_asymmetry.max((a[0][1] - a[1][0]).abs());
            }
            for xi in &probes {
                let mut q = 0.0;
                for i in 0..dim {
                    for j in 0..dim {
                        q += xi[i] * a[i][j] * xi[j];
                    }
                }
                rep.min_rayleigh = rep.min_rayleigh.min(q);
                rep.max_rayleigh = rep.max_rayleigh.max(q);
            }
            let ((l0, l1), _) = sym_eigen(dim, &a);
            rep.min_eigen = rep.min_eigen.min(l0);
            rep.max_eigen = rep.max_eigen.max(l1);
            let s = sym_sqrt(dim, &a);
            for i in 0..dim {
                for j in 0..dim {
                    let ss: f64 = (0..dim).map(|m| s[i][m] * s[j][m]).sum();
                    rep.max_sigma_error = rep.max_sigma_error.max((ss - a[i][j]).abs());
                }
            }
            rep.points_checked += 1;
        }
    }
    let tol = 1e-12;
    let scale = cf.upper.max(1.0);
    if rep.min_rayleigh < cf.lambda * (1.0 - tol) || rep.min_eigen < cf.lambda * (1.0 - tol) {
        rep.failures.push(format!(
            "lower ellipticity violated: min Rayleigh {:.6}, min eigenvalue {:.6}, lambda {}",
            rep.min_rayleigh, rep.min_eigen, cf.lambda
        ));
    }
    if rep.max_rayleigh > cf.upper * (1.0 + tol) || rep.max_eigen > cf.upper * (1.0 + tol) {
        rep.failures.push(format!(
            "upper ellipticity violated: max eigenvalue {:.6}, Lambda {}",
            rep.max_eigen, cf.upper
        ));
    }
    if rep.drift_sup > cf.drift_bound * (1.0 + tol) {
        rep.failures.push(format!(
            "drift bound violated: sup |b_i| {} > {}",
            rep.drift_sup, cf.drift_bound
        ));
    }
    if rep.max_asymmetry > tol * scale {
        rep.failures.push(format!(
            "a is not symmetric (max |a12 - a21| = {:e})",
            rep.max_asymmetry
        ));
    }
    if rep.max_sigma_error > 1e-10 * scale {
        rep.failures
            .push(format!("sigma sigma^T differs from a by {:e}", rep.max_sigma_error));
    }
    rep.pass = rep.failures.is_empty();
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::grid::SpaceGrid;

    fn grid(dim: usize) -> SpaceTimeGrid {
        SpaceTimeGrid::new(SpaceGrid::cube(dim, -3.0, 3.0, 31).unwrap(), 1.0, 4).unwrap()
    }

    #[test]
    fn identity_passes() {
        for d in 1..=2 {
            let cf = CoefficientField::identity(d);
            let rep = validate_ellipticity(&cf, &grid(d)).unwrap();
            assert!(rep.pass, "{:?}", rep.failures);
        }
    }

    #[test]
    fn indefinite_matrix_fails() {
        // eigenvalues of [[1,2],[2,1]] are -1 and 3
        let preset = Preset::Constant {
            a: vec![1.0, 2.0, 2.0, 1.0],
            drift: vec![],
        };
        let cf = CoefficientField::new(2, preset, 0.5, 3.0, 0.0).unwrap();
        let rep = validate_ellipticity(&cf, &grid(2)).unwrap();
        assert!(!rep.pass);
        assert!((rep.min_eigen + 1.0).abs() < 1e-12);
        assert!((rep.max_eigen - 3.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_sine_within_bounds() {
        let preset = Preset::ScalarSine {
            base: 1.0,
            amp: 0.5,
            freq: 1.0,
            omega: 0.0,
            drift: vec![],
        };
        let cf = CoefficientField::new(1, preset, 0.5, 1.5, 0.0).unwrap();
        let rep = validate_ellipticity(&cf, &grid(1)).unwrap();
        assert!(rep.pass, "{:?}", rep.failures);
        // direct range scan of 1 + 0.5 sin(x) on the grid nodes
        let g = grid(1).space;
        let (lo, hi) = (0..g.len())
            .map(|i| 1.0 + 0.5 * g.coord(i)[0].sin())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        assert!((rep.min_rayleigh - lo).abs() < 1e-12 && (rep.max_rayleigh - hi).abs() < 1e-12);
    }

    #[test]
    fn drift_bound_enforced() {
        let preset = Preset::Identity {
            scale: 1.0,
            drift: vec![2.0],
        };
        let cf = CoefficientField::new(1, preset, 1.0, 1.0, 1.0).unwrap();
        assert!(!validate_ellipticity(&cf, &grid(1)).unwrap().pass);
    }

    #[test]
    fn sqrt_and_inverse() {
        let m = [[2.0, 0.7], [0.7, 1.3]];
        let s = sym_sqrt(2, &m);
        for i in 0..2 {
            for j in 0..2 {
                let v: f64 = (0..2).map(|k| s[i][k] * s[k][j]).sum();
                assert!((v - m[i][j]).abs() < 1e-13);
            }
        }
        let inv = invert(2, &m).unwrap();
        let e: f64 = (0..2).map(|k| m[0][k] * inv[k][1]).sum();
        assert!(e.abs() < 1e-14);
        assert!(invert(2, &[[1.0, 1.0], [1.0, 1.0]]).is_err());
    }

    #[test]
    fn symmetrization_leaves_scan_unchanged() {
        let preset = Preset::Constant {
            a: vec![1.5, 0.3, 0.3, 0.9],
            drift: vec![],
        };
        let cf = CoefficientField::from_preset(2, preset).unwrap();
        let m = cf.a(0.0, &[0.0, 0.0]);
        let sym = [
            [m[0][0], 0.5 * (m[0][1] + m[1][0])],
            [0.5 * (m[0][1] + m[1][0]), m[1][1]],
        ];
        let cf2 = CoefficientField::from_preset(
            2,
            Preset::Constant {
                a: vec![sym[0][0], sym[0][1], sym[1][0], sym[1][1]],
                drift: vec![],
            },
        )
        .unwrap();
        let r1 = validate_ellipticity(&cf, &grid(2)).unwrap();
        let r2 = validate_ellipticity(&cf2, &grid(2)).unwrap();
        assert_eq!(r1.min_rayleigh, r2.min_rayleigh);
        assert_eq!(r1.max_rayleigh, r2.max_rayleigh);
    }

    #[test]
    fn preset_json_roundtrip() {
        let j = r#"{"preset":"scalar-sine","amp":0.25}"#;
        let p: Preset = serde_json::from_str(j).unwrap();
        assert_eq!(
            p,
            Preset::ScalarSine {
                base: 1.0,
                amp: 0.25,
                freq: 1.0,
                omega: 0.0,
                drift: vec![]
            }
        );
    }
}
