//! Small statistical helpers used by the Monte Carlo estimators.

use statrs::distribution::{ContinuousCDF, Normal};

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Sample mean and unbiased sample variance.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n < 2 {
        return (xs.first().copied().unwrap_or(0.0), 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var)
}

/// Least-squares line `y = intercept + slope * x`; returns `(slope, intercept, slope_se)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return (0.0, my, f64::INFINITY);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let se = if xs.len() > 2 {
        let rss: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, intercept, se)
}

/// Slope of `ln y` against `ln x`, ignoring non-positive entries.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .unzip();
    if lx.len() < 2 {
        return (f64::NAN, f64::INFINITY);
    }
    let (slope, _, se) = linear_fit(&lx, &ly);
    (slope, se)
}

/// Two-sided standard normal quantile for a per-test level after Bonferroni over `tests`.
pub fn bonferroni_z(alpha: f64, tests: usize) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.inverse_cdf(1.0 - alpha / (2.0 * tests.max(1) as f64))
}

/// Two-sided level matching a `k`-sigma band for a single normal test.
pub fn sigma_level(k: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    2.0 * (1.0 - normal.cdf(k))
}

/// Trapezoid weights on `n + 1` equispaced points with spacing `step`.
pub fn trapezoid_weight(i: usize, n: usize, step: f64) -> f64 {
    if i == 0 || i == n {
        0.5 * step
    } else {
        step
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 - 0.5 * x).collect();
        let (m, c, se) = linear_fit(&xs, &ys);
        assert!((m + 0.5).abs() < 1e-14 && (c - 2.0).abs() < 1e-14 && se < 1e-12);
    }

    #[test]
    fn bonferroni_twenty_bins_three_sigma() {
        let z = bonferroni_z(sigma_level(3.0), 20);
        assert!((z - 3.81).abs() < 0.02, "{z}");
    }

    #[test]
    fn mean_se_constant() {
        assert_eq!(mean_se(&[2.0, 2.0, 2.0]), (2.0, 0.0));
    }
}
