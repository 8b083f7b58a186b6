//! Estimates with confidence intervals, and the small statistical toolkit
//! the experiments and tests share.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Two-sided normal quantile that keeps `comparisons` simultaneous checks
/// at a 95% family-wise level (Bonferroni).
pub fn family_z(comparisons: usize) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    if comparisons <= 1 {
        return Z95;
    }
    let alpha = 0.05 / comparisons as f64;
    Normal::standard().inverse_cdf(1.0 - alpha / 2.0)
}

const BOOTSTRAP_RESAMPLES: usize = 1000;
/// Above this many observations the bootstrap falls back to the normal
/// interval; the two agree to well under a percent of the width there.
const BOOTSTRAP_MAX_N: usize = 100_000;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub experiment: String,
    pub kernel: String,
    pub params: BTreeMap<String, f64>,
    pub seed: u64,
    pub wall_seconds: f64,
}

/// A Monte Carlo (or exact) estimate with its interval and bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Replicates attempted, including censored ones.
    pub reps: u64,
    pub censored: u64,
    pub metadata: Metadata,
    /// Derived quantities (normalized ratios and the like).
    pub extras: BTreeMap<String, f64>,
}

impl EstimateReport {
    fn bare(point: f64, ci_low: f64, ci_high: f64, reps: u64, censored: u64) -> Self {
        EstimateReport {
            point,
            ci_low: ci_low.min(point),
            ci_high: ci_high.max(point),
            reps,
            censored,
            metadata: Metadata::default(),
            extras: BTreeMap::new(),
        }
    }

    /// Binomial proportion over `completed` replicates with a Wilson 95%
    /// interval. `censored` replicates are reported but not in the base.
    pub fn proportion(successes: u64, completed: u64, censored: u64) -> Self {
        let (lo, hi) = wilson(successes, completed, Z95);
        let p = if completed == 0 {
            f64::NAN
        } else {
            successes as f64 / completed as f64
        };
        Self::bare(p, lo, hi, completed + censored, censored)
    }

    /// Sample mean with a bootstrap percentile 95% interval.
    pub fn mean(values: &[f64], censored: u64, bootstrap_seed: u64) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::bare(f64::NAN, f64::NAN, f64::NAN, censored, censored);
        }
        let m = mean(values);
        let (lo, hi) = if n > BOOTSTRAP_MAX_N {
            let se = (variance(values) / n as f64).sqrt();
            (m - Z95 * se, m + Z95 * se)
        } else {
            bootstrap_mean_ci(values, BOOTSTRAP_RESAMPLES, bootstrap_seed)
        };
        Self::bare(m, lo, hi, n as u64 + censored, censored)
    }

    /// Sample median with a distribution-free 95% interval from order
    /// statistics.
    pub fn median(values: &[f64], censored: u64) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::bare(f64::NAN, f64::NAN, f64::NAN, censored, censored);
        }
        let (lo, hi) = median_ci(values);
        Self::bare(median(values), lo, hi, n as u64 + censored, censored)
    }

    /// A value known exactly (zero-width interval).
    pub fn exact(value: f64) -> Self {
        Self::bare(value, value, value, 0, 0)
    }

    pub fn with_experiment(mut self, experiment: &str, kernel: &str, seed: u64) -> Self {
        self.metadata.experiment = experiment.to_string();
        self.metadata.kernel = kernel.to_string();
        self.metadata.seed = seed;
        self
    }

    pub fn with_param(mut self, key: &str, value: f64) -> Self {
        self.metadata.params.insert(key.to_string(), value);
        self
    }

    pub fn with_extra(mut self, key: &str, value: f64) -> Self {
        self.extras.insert(key.to_string(), value);
        self
    }

    pub fn completed(&self) -> u64 {
        self.reps - self.censored
    }

    /// Standard error implied by the interval half-width.
    pub fn se(&self) -> f64 {
        (self.ci_high - self.ci_low) / (2.0 * Z95)
    }

    pub fn contains(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }

    /// Whether two estimates agree within their joint 95% interval,
    /// `|a - b| <= z * sqrt(se_a^2 + se_b^2)`.
    pub fn agrees_with(&self, other: &EstimateReport) -> bool {
        self.agrees_within(other, Z95)
    }

    /// `|a - b| <= z * sqrt(se_a^2 + se_b^2)` for a caller-chosen `z`.
    pub fn agrees_within(&self, other: &EstimateReport, z: f64) -> bool {
        let joint = (self.se().powi(2) + other.se().powi(2)).sqrt();
        (self.point - other.point).abs() <= z * joint
    }

    /// `self` is below `other` allowing for joint sampling error.
    pub fn not_above(&self, other: &EstimateReport) -> bool {
        let joint = (self.se().powi(2) + other.se().powi(2)).sqrt();
        self.point <= other.point + Z95 * joint
    }
}

/// Wilson score interval for `successes` out of `n`.
pub fn wilson(successes: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes as f64 == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

pub fn bootstrap_mean_ci(values: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let n = values.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let lo = means[((resamples as f64) * 0.025).floor() as usize];
    let hi = means[(((resamples as f64) * 0.975).ceil() as usize).min(resamples - 1)];
    (lo, hi)
}

/// Median by sorting (mean of the two middle values for even counts).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Order statistics at ranks `n/2 -+ z sqrt(n)/2`, a 95% interval for the
/// median by the normal approximation to the binomial.
pub fn median_ci(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let half = Z95 * n.sqrt() / 2.0;
    let lo = ((n / 2.0 - half).floor().max(1.0) as usize).min(v.len()) - 1;
    let hi = ((n / 2.0 + half).ceil().max(1.0) as usize).min(v.len()) - 1;
    (v[lo], v[hi])
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS acceptance at level `alpha`.
pub fn ks_accepts(a: &[f64], b: &[f64], alpha: f64) -> bool {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    ks_statistic(a, b) <= c * ((na + nb) / (na * nb)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_z_matches_bonferroni_quantiles() {
        assert_eq!(family_z(1), Z95);
        // Phi^{-1}(1 - 0.05 / 48) = 3.0778
        assert!((family_z(24) - 3.0778).abs() < 1e-3);
        assert!(family_z(10) > family_z(5));
    }

    #[test]
    fn median_interval_brackets_the_median() {
        let v: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let r = EstimateReport::median(&v, 0);
        assert_eq!(r.point, 50.0);
        // ranks 50.5 -+ 9.85 -> 1-based order statistics 40 and 61
        assert_eq!((r.ci_low, r.ci_high), (39.0, 60.0));
        let one = EstimateReport::median(&[3.0], 2);
        assert_eq!((one.point, one.ci_low, one.ci_high, one.reps), (3.0, 3.0, 3.0, 3));
    }

    #[test]
    fn wilson_contains_point_and_is_ordered() {
        for &(s, n) in &[(0u64, 10u64), (3, 10), (10, 10), (500, 1000)] {
            let (lo, hi) = wilson(s, n, Z95);
            let p = s as f64 / n as f64;
            assert!(lo <= p && p <= hi, "{s}/{n}: {lo} {hi}");
        }
        // reference value: 3/10 -> (0.1078, 0.6032)
        let (lo, hi) = wilson(3, 10, Z95);
        assert!((lo - 0.10779).abs() < 1e-4 && (hi - 0.60322).abs() < 1e-4);
    }

    #[test]
    fn bootstrap_interval_brackets_mean() {
        let v: Vec<f64> = (0..200).map(|i| (i % 7) as f64).collect();
        let r = EstimateReport::mean(&v, 0, 3);
        assert!(r.ci_low < r.point && r.point < r.ci_high);
        let se = (variance(&v) / 200.0).sqrt();
        assert!(((r.ci_high - r.ci_low) / (2.0 * Z95 * se) - 1.0).abs() < 0.2);
    }

    #[test]
    fn ks_detects_shift() {
        let a: Vec<f64> = (0..1000).map(|i| i as f64 / 1000.0).collect();
        let b: Vec<f64> = a.iter().map(|x| x + 0.3).collect();
        assert!(ks_accepts(&a, &a, 0.01));
        assert!(!ks_accepts(&a, &b, 0.01));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
