//! Binomial confidence intervals and the log-log slope fit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two-sided 95% standard normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for `successes / trials`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::ZeroTrials);
    }
    if successes > trials {
        return Err(Error::OutOfRange {
            name: "successes",
            detail: format!("{successes} > trials {trials}"),
        });
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let low = if successes == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let high = if successes == trials { 1.0 } else { (center + half).clamp(p, 1.0) };
    Ok((low, high))
}

/// Monte Carlo estimate of `P{dist <= epsilon}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationEstimate {
    pub epsilon: f64,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_samples: u64,
    pub successes: u64,
}

impl ConcentrationEstimate {
    pub fn from_counts(epsilon: f64, successes: u64, n_samples: u64) -> Result<Self> {
        let (ci_low, ci_high) = wilson_interval(successes, n_samples, Z_95)?;
        Ok(Self {
            epsilon,
            p_hat: successes as f64 / n_samples as f64,
            ci_low,
            ci_high,
            n_samples,
            successes,
        })
    }

    /// Thresholds one recorded distance per sample at every `epsilon`.
    ///
    /// The same samples serve the whole grid, so `p_hat` is exactly
    /// monotone in `epsilon`.
    pub fn from_distances(distances: &[f64], grid: &[f64]) -> Result<Vec<Self>> {
        let mut sorted = distances.to_vec();
        sorted.sort_by(f64::total_cmp);
        grid.iter()
            .map(|&eps| {
                let hits = sorted.partition_point(|&d| d <= eps) as u64;
                Self::from_counts(eps, hits, sorted.len() as u64)
            })
            .collect()
    }
}

/// Result of the weighted log-log regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
    pub intercept_stderr: f64,
    pub points_used: usize,
}

/// Weighted least squares of `log p_hat` on `log epsilon`.
///
/// Only points with `0 < p_hat < 1` enter. The weight of a point is the
/// inverse square of its confidence-interval width on the log scale; the
/// standard errors come from the weighted residuals.
pub fn fit_epsilon_slope(estimates: &[ConcentrationEstimate]) -> Result<SlopeFit> {
    let pts: Vec<(f64, f64, f64)> = estimates
        .iter()
        .filter(|e| e.p_hat > 0.0 && e.p_hat < 1.0 && e.epsilon > 0.0)
        .map(|e| {
            let log_width = (e.ci_high / e.ci_low.max(f64::MIN_POSITIVE)).ln().max(f64::EPSILON);
            (e.epsilon.ln(), e.p_hat.ln(), 1.0 / (log_width * log_width))
        })
        .collect();
    if pts.len() < 3 {
        return Err(Error::TooFewPoints(pts.len()));
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = pts
        .iter()
        .map(|p| p.2 * (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let s2 = ssr / (pts.len() as f64 - 2.0);
    Ok(SlopeFit {
        slope,
        slope_stderr: (s2 / sxx).sqrt(),
        intercept,
        intercept_stderr: (s2 * (1.0 / sw + mx * mx / sxx)).sqrt(),
        points_used: pts.len(),
    })
}

/// Kolmogorov-Smirnov statistic of a sample against uniform `[0, 1]`.
pub fn ks_uniform(sample: &[f64]) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let x = x.clamp(0.0, 1.0);
            ((i as f64 + 1.0) / n - x).max(x - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn wilson_boundaries() {
        assert_eq!(wilson_interval(0, 100, Z_95).unwrap().0, 0.0);
        assert_eq!(wilson_interval(100, 100, Z_95).unwrap().1, 1.0);
        assert_eq!(wilson_interval(0, 0, Z_95), Err(Error::ZeroTrials));
        assert!(wilson_interval(5, 4, Z_95).is_err());
    }

    #[test]
    fn wilson_reference_values() {
        // Reference values from an independent evaluation of the closed form.
        let (lo, hi) = wilson_interval(50, 100, Z_95).unwrap();
        assert_abs_diff_eq!(lo, 0.4038315303659956, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 0.5961684696340044, epsilon = 1e-12);
        assert_abs_diff_eq!(0.5 - lo, hi - 0.5, epsilon = 1e-12);
        let (lo, hi) = wilson_interval(19, 100, Z_95).unwrap();
        assert_abs_diff_eq!(lo, 0.12514751509768735, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 0.27778845379064376, epsilon = 1e-12);
        assert_abs_diff_eq!(wilson_interval(0, 100, Z_95).unwrap().1, 0.03699349820698568, epsilon = 1e-12);
        assert_abs_diff_eq!(wilson_interval(100, 100, Z_95).unwrap().0, 0.9630065017930143, epsilon = 1e-12);
    }

    fn synthetic(c: f64, power: i32) -> Vec<ConcentrationEstimate> {
        [1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2]
            .iter()
            .map(|&eps| {
                let p = c * f64::powi(eps, power);
                let mut e = ConcentrationEstimate::from_counts(eps, 500, 1000).unwrap();
                e.p_hat = p;
                e.ci_low = p * 0.9;
                e.ci_high = p * 1.1;
                e
            })
            .collect()
    }

    #[test]
    fn slope_of_exact_power_laws() {
        let fit = fit_epsilon_slope(&synthetic(3.0, 1)).unwrap();
        assert_abs_diff_eq!(fit.slope, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.slope_stderr, 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.intercept, 3f64.ln(), epsilon = 1e-10);
        let fit = fit_epsilon_slope(&synthetic(100.0, 2)).unwrap();
        assert_abs_diff_eq!(fit.slope, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn slope_needs_three_interior_points() {
        let mut pts = synthetic(3.0, 1);
        pts.truncate(2);
        assert_eq!(fit_epsilon_slope(&pts), Err(Error::TooFewPoints(2)));
        let mut pts = synthetic(3.0, 1);
        for p in pts.iter_mut().skip(2) {
            p.p_hat = 1.0;
        }
        assert!(fit_epsilon_slope(&pts).is_err());
    }

    #[test]
    fn thresholding_is_monotone() {
        let d = [0.5, 0.1, 0.01, 0.3, 0.0];
        let est = ConcentrationEstimate::from_distances(&d, &[0.0, 0.01, 0.2, 1.0]).unwrap();
        let hits: Vec<u64> = est.iter().map(|e| e.successes).collect();
        assert_eq!(hits, vec![1, 2, 3, 5]);
    }

    #[test]
    fn ks_of_grid_is_small() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        assert_abs_diff_eq!(ks_uniform(&xs), 0.0005, epsilon = 1e-12);
    }
}
