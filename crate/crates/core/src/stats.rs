//! Hypothesis tests and density estimation for the experiment pipeline:
//! one-sample K-S normality test, one-sided Z-tests, and Gaussian KDE with
//! Silverman bandwidth.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Significance level used for every decision in the pipeline.
pub const ALPHA: f64 = 0.05;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("{0} requires at least {1} samples")]
    TooFewSamples(&'static str, usize),
    #[error("degenerate sample: zero variance")]
    DegenerateSample,
    #[error("sample contains non-finite values")]
    NonFinite,
}

/// A labelled set of i.i.d. per-run samples.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleSet {
    pub label: String,
    pub samples: Vec<f64>,
}

impl SampleSet {
    pub fn new(label: impl Into<String>, samples: Vec<f64>) -> SampleSet {
        SampleSet {
            label: label.into(),
            samples,
        }
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.samples)
    }

    pub fn std(&self) -> f64 {
        sample_std(&self.samples)
    }
}

/// Outcome of one hypothesis test; `reject_null` is the decision at
/// [`ALPHA`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TestReport {
    pub statistic: f64,
    pub p_value: f64,
    pub reject_null: bool,
}

impl TestReport {
    fn new(statistic: f64, p_value: f64) -> TestReport {
        let p_value = p_value.clamp(0.0, 1.0);
        TestReport {
            statistic,
            p_value,
            reject_null: p_value < ALPHA,
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn sample_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    var.sqrt()
}

/// Standard normal CDF via the complementary error function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Complement of the Kolmogorov distribution CDF, `Q(z) = P(K > z)`, using
/// the two power-series regimes of the standard numerical treatment.
pub fn kolmogorov_q(z: f64) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    if z < 1.18 {
        let t = (-std::f64::consts::PI * std::f64::consts::PI / (8.0 * z * z)).exp();
        let sum = t + t.powi(9) + t.powi(25) + t.powi(49);
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / z * sum).clamp(0.0, 1.0)
    } else {
        let t = (-2.0 * z * z).exp();
        (2.0 * (t - t.powi(4) + t.powi(9))).clamp(0.0, 1.0)
    }
}

/// One-sample K-S test of normality with parameters estimated from the
/// sample: `D` is the sup-distance between the empirical CDF and the fitted
/// normal CDF, and the p-value maps the corrected statistic
/// `(sqrt(n) + 0.12 + 0.11/sqrt(n)) * D` through the asymptotic Kolmogorov
/// distribution.
///
/// Because the parameters are estimated from the same data, this procedure
/// is strongly conservative: on truly normal samples the p-values
/// concentrate well above [`ALPHA`] and rejections are rare.
pub fn ks_normal_test(samples: &[f64]) -> Result<TestReport, StatsError> {
    if samples.len() < 8 {
        return Err(StatsError::TooFewSamples("ks_normal_test", 8));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let m = mean(samples);
    let sd = sample_std(samples);
    if sd <= 0.0 {
        return Err(StatsError::DegenerateSample);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in sorted.iter().enumerate() {
        let f = normal_cdf((x - m) / sd);
        d = d.max(((i + 1) as f64 / n - f).abs());
        d = d.max((i as f64 / n - f).abs());
    }
    let corrected = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    Ok(TestReport::new(d, kolmogorov_q(corrected)))
}

/// One-sided two-sample Z-test of `E[a] > E[b]` with unpooled variances.
/// Null hypothesis: `E[a] <= E[b]`.
pub fn z_test_greater(a: &SampleSet, b: &SampleSet) -> Result<TestReport, StatsError> {
    if a.n() < 2 || b.n() < 2 {
        return Err(StatsError::TooFewSamples("z_test_greater", 2));
    }
    let (sa, sb) = (a.std(), b.std());
    let se = (sa * sa / a.n() as f64 + sb * sb / b.n() as f64).sqrt();
    if se <= 0.0 || !se.is_finite() {
        return Err(StatsError::DegenerateSample);
    }
    let z = (a.mean() - b.mean()) / se;
    Ok(TestReport::new(z, 1.0 - normal_cdf(z)))
}

/// One-sided one-sample Z-test of `E[d] > 0`. Null hypothesis:
/// `E[d] <= 0`.
pub fn z_test_positive_mean(d: &SampleSet) -> Result<TestReport, StatsError> {
    if d.n() < 2 {
        return Err(StatsError::TooFewSamples("z_test_positive_mean", 2));
    }
    let sd = d.std();
    if sd <= 0.0 || !sd.is_finite() {
        return Err(StatsError::DegenerateSample);
    }
    let z = d.mean() / (sd / (d.n() as f64).sqrt());
    Ok(TestReport::new(z, 1.0 - normal_cdf(z)))
}

/// Gaussian kernel density estimate with Silverman bandwidth
/// `h = 0.9 min(std, IQR / 1.34) n^{-1/5}`, evaluated on `n_points` evenly
/// covering `[min - 3h, max + 3h]`.
pub fn kde_points(samples: &[f64], n_points: usize) -> Result<Vec<(f64, f64)>, StatsError> {
    if samples.len() < 2 {
        return Err(StatsError::TooFewSamples("kde_points", 2));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let sd = sample_std(samples);
    if sd <= 0.0 {
        return Err(StatsError::DegenerateSample);
    }
    let n_points = n_points.max(2);
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    let h = 0.9 * spread * (samples.len() as f64).powf(-0.2);

    let lo = sorted[0] - 3.0 * h;
    let hi = sorted[sorted.len() - 1] + 3.0 * h;
    let step = (hi - lo) / (n_points - 1) as f64;
    let norm = 1.0 / (samples.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let points = (0..n_points)
        .map(|i| {
            let x = lo + i as f64 * step;
            let density = norm
                * samples
                    .iter()
                    .map(|&xi| {
                        let u = (x - xi) / h;
                        (-0.5 * u * u).exp()
                    })
                    .sum::<f64>();
            (x, density)
        })
        .collect();
    Ok(points)
}

/// Linearly interpolated quantile of a sorted slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal, StandardNormal};

    #[test]
    fn normal_cdf_reference_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-12);
        assert!((normal_cdf(1.959964) - 0.975).abs() < 1e-6);
        assert!((normal_cdf(-1.0) - 0.158655).abs() < 1e-6);
    }

    #[test]
    fn kolmogorov_q_reference_points() {
        // Known points of the Kolmogorov distribution complement.
        assert_eq!(kolmogorov_q(0.0), 1.0);
        assert!((kolmogorov_q(1.0) - 0.2700).abs() < 1e-3);
        assert!((kolmogorov_q(2.0) - 6.7093e-4).abs() < 1e-6);
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 2e-3);
    }

    #[test]
    fn ks_statistic_matches_brute_force() {
        let samples = vec![0.3, -1.2, 0.8, 2.1, -0.4, 0.0, 1.5, -0.9, 0.2, 0.6];
        let report = ks_normal_test(&samples).unwrap();

        // Brute force: both one-sided gaps at every sample point.
        let m = mean(&samples);
        let sd = sample_std(&samples);
        let mut sorted = samples.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len() as f64;
        let mut d = 0.0f64;
        for (i, x) in sorted.iter().enumerate() {
            let f = normal_cdf((x - m) / sd);
            for emp in [i as f64 / n, (i + 1) as f64 / n] {
                d = d.max((emp - f).abs());
            }
        }
        assert!((report.statistic - d).abs() < 1e-12);
    }

    #[test]
    fn ks_on_normal_data_is_conservative() {
        // With estimated parameters the fitted CDF tracks the sample, so
        // the corrected statistic mapped through the Kolmogorov
        // distribution almost never rejects truly normal data.
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let batches = 500;
        let mut rejections = 0;
        let mut p_min = 1.0f64;
        for _ in 0..batches {
            let xs: Vec<f64> = (0..100)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let report = ks_normal_test(&xs).unwrap();
            p_min = p_min.min(report.p_value);
            if report.reject_null {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / batches as f64;
        assert!(rate <= 0.01, "rate {rate}");
        assert!(
            p_min > ALPHA,
            "even the smallest p-value stays clear: {p_min}"
        );
    }

    #[test]
    fn ks_p_orders_uniform_below_normal() {
        // The test still separates distributions: p-values on uniform
        // batches sit clearly below those on normal batches.
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let batches = 200;
        let median = |mut v: Vec<f64>| {
            v.sort_by(|a, b| a.partial_cmp(b).unwrap());
            v[v.len() / 2]
        };
        let p_norm: Vec<f64> = (0..batches)
            .map(|_| {
                let xs: Vec<f64> = (0..100)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                ks_normal_test(&xs).unwrap().p_value
            })
            .collect();
        let p_unif: Vec<f64> = (0..batches)
            .map(|_| {
                let xs: Vec<f64> = (0..100).map(|_| rng.random::<f64>()).collect();
                ks_normal_test(&xs).unwrap().p_value
            })
            .collect();
        let (mn, mu) = (median(p_norm), median(p_unif));
        assert!(mu < mn, "median uniform p {mu} vs normal {mn}");
        assert!(
            mu < 0.55,
            "uniform batches should score visibly lower: {mu}"
        );
        assert!(mn > 0.7, "normal batches should score high: {mn}");
    }

    #[test]
    fn ks_guards() {
        assert_eq!(
            ks_normal_test(&[1.0; 10]).unwrap_err(),
            StatsError::DegenerateSample
        );
        assert_eq!(
            ks_normal_test(&[1.0, 2.0]).unwrap_err(),
            StatsError::TooFewSamples("ks_normal_test", 8)
        );
    }

    #[test]
    fn z_greater_identical_samples() {
        let a = SampleSet::new("a", vec![1.0, 2.0, 3.0, 4.0]);
        let report = z_test_greater(&a, &a.clone()).unwrap();
        assert!(report.statistic.abs() < 1e-12);
        assert!((report.p_value - 0.5).abs() < 1e-12);
        assert!(!report.reject_null);
    }

    #[test]
    fn z_greater_hand_computed() {
        // Means 1.2 vs 1.0, both std 0.5, both n = 100:
        // z = 0.2 / sqrt(0.005) = 2.8284, p = 1 - Phi(z) = 0.002339.
        let a = synthetic(1.2, 0.5, 100);
        let b = synthetic(1.0, 0.5, 100);
        let report = z_test_greater(&a, &b).unwrap();
        assert!(
            (report.statistic - 2.8284).abs() < 1e-3,
            "{}",
            report.statistic
        );
        assert!(
            (report.p_value - 0.00234).abs() < 1e-4,
            "{}",
            report.p_value
        );
        assert!(report.reject_null);
    }

    #[test]
    fn z_greater_p_monotone_in_mean() {
        let b = synthetic(1.0, 0.5, 100);
        let mut last = 1.0;
        for da in [0.0, 0.05, 0.1, 0.2, 0.4] {
            let a = synthetic(1.0 + da, 0.5, 100);
            let p = z_test_greater(&a, &b).unwrap().p_value;
            assert!(p <= last + 1e-12);
            last = p;
        }
    }

    #[test]
    fn z_positive_mean_table_scale() {
        // d-bar 995.20, s 475.24, n 100: z = 20.94, p vanishes.
        let d = synthetic(995.20, 475.24, 100);
        let report = z_test_positive_mean(&d).unwrap();
        assert!(
            (report.statistic - 20.94).abs() < 0.01,
            "{}",
            report.statistic
        );
        assert!(report.p_value < 1e-12);
        assert!(report.reject_null);
    }

    #[test]
    fn z_positive_mean_sign_symmetry() {
        let d = synthetic(0.3, 1.0, 50);
        let flipped = SampleSet::new("f", d.samples.iter().map(|x| -x).collect());
        let p = z_test_positive_mean(&d).unwrap().p_value;
        let q = z_test_positive_mean(&flipped).unwrap().p_value;
        assert!((p + q - 1.0).abs() < 1e-9);

        let zero = synthetic(0.0, 1.0, 50);
        let at_zero = z_test_positive_mean(&zero).unwrap();
        assert!((at_zero.p_value - 0.5).abs() < 1e-9);
    }

    #[test]
    fn z_degenerate_data() {
        let a = SampleSet::new("a", vec![2.0, 2.0, 2.0]);
        assert_eq!(
            z_test_positive_mean(&a).unwrap_err(),
            StatsError::DegenerateSample
        );
    }

    #[test]
    fn kde_symmetric_about_mean() {
        let samples = vec![-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let points = kde_points(&samples, 101).unwrap();
        let k = points.len();
        for i in 0..k / 2 {
            let (xl, dl) = points[i];
            let (xr, dr) = points[k - 1 - i];
            assert!((xl + xr).abs() < 1e-9);
            assert!((dl - dr).abs() < 1e-9);
        }
    }

    #[test]
    fn kde_integrates_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let normal = Normal::new(5.0, 2.0).unwrap();
        let samples: Vec<f64> = (0..200).map(|_| normal.sample(&mut rng)).collect();
        let points = kde_points(&samples, 512).unwrap();
        let mut integral = 0.0;
        for w in points.windows(2) {
            integral += 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
        }
        assert!((integral - 1.0).abs() < 0.01, "integral {integral}");
    }

    #[test]
    fn kde_two_clusters_bimodal_equal_peaks() {
        let mut samples = vec![0.0; 10];
        samples.extend(vec![10.0; 10]);
        // Give each cluster a whisker of width so the sample is not
        // degenerate at the quantile level.
        samples.push(0.5);
        samples.push(9.5);
        let points = kde_points(&samples, 401).unwrap();
        let peak_near = |c: f64| {
            points
                .iter()
                .filter(|(x, _)| (x - c).abs() < 2.0)
                .map(|&(_, d)| d)
                .fold(f64::MIN, f64::max)
        };
        let (p0, p1) = (peak_near(0.0), peak_near(10.0));
        let valley = points
            .iter()
            .filter(|(x, _)| (x - 5.0).abs() < 1.0)
            .map(|&(_, d)| d)
            .fold(f64::MAX, f64::min);
        assert!((p0 - p1).abs() < 1e-6, "peaks {p0} vs {p1}");
        assert!(valley < 0.5 * p0, "no valley between the modes");
    }

    #[test]
    fn kde_degenerate_sample() {
        assert_eq!(
            kde_points(&[3.0, 3.0, 3.0], 10).unwrap_err(),
            StatsError::DegenerateSample
        );
    }

    /// Builds a sample with exactly the requested mean and sample std by
    /// standardizing a seeded normal draw.
    fn synthetic(target_mean: f64, target_std: f64, n: usize) -> SampleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(64);
        let raw: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let m = mean(&raw);
        let sd = sample_std(&raw);
        SampleSet::new(
            "synthetic",
            raw.iter()
                .map(|x| target_mean + (x - m) / sd * target_std)
                .collect(),
        )
    }
}
