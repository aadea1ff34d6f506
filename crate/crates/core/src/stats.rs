//! Statistical test engine: two-sample Kolmogorov-Smirnov, Anderson-Darling
//! normality, log-log decay slopes and basic moment summaries.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Minimum sample size accepted by the two-sample tests.
pub const MIN_KS_SAMPLE: usize = 50;

fn sorted(sample: &[f64]) -> Vec<f64> {
    let mut v = sample.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("NaN in sample"));
    v
}

/// Survival function of the Kolmogorov distribution,
/// `Q(z) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 z^2)`, with the Jacobi-theta
/// form for small `z` where the alternating series converges slowly.
pub fn kolmogorov_sf(z: f64) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    if z < 1.18 {
        let v = (-std::f64::consts::PI * std::f64::consts::PI / (8.0 * z * z)).exp();
        let sum = v + v.powi(9) + v.powi(25) + v.powi(49);
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / z * sum
    } else {
        let w = (-2.0 * z * z).exp();
        let sum = w - w.powi(4) + w.powi(9) - w.powi(16) + w.powi(25);
        2.0 * sum
    }
    .clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov-Smirnov statistic with its asymptotic p-value.
pub fn two_sample_ks(sample_a: &[f64], sample_b: &[f64]) -> Result<(f64, f64)> {
    for sample in [sample_a, sample_b] {
        if sample.len() < MIN_KS_SAMPLE {
            return Err(Error::SampleTooSmall { need: MIN_KS_SAMPLE, got: sample.len() });
        }
    }
    let a = sorted(sample_a);
    let b = sorted(sample_b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut i = 0usize;
    let mut j = 0usize;
    let mut stat = 0.0f64;
    while i < a.len() && j < b.len() {
        let xa = a[i];
        let xb = b[j];
        let x = xa.min(xb);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        stat = stat.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = na * nb / (na + nb);
    let p = kolmogorov_sf(n_eff.sqrt() * stat);
    Ok((stat, p))
}

/// Anderson-Darling normality test with estimated mean and variance
/// (the `A*^2 = A^2 (1 + 0.75/n + 2.25/n^2)` small-sample correction).
/// Returns the corrected statistic; reject normality at the 1% level when it
/// exceeds [`AD_CRITICAL_1PCT`].
pub const AD_CRITICAL_1PCT: f64 = 1.035;

pub fn anderson_darling_normal(sample: &[f64]) -> Result<f64> {
    let n = sample.len();
    if n < MIN_KS_SAMPLE {
        return Err(Error::SampleTooSmall { need: MIN_KS_SAMPLE, got: n });
    }
    let xs = sorted(sample);
    let (mean, var, _) = mean_var_se(&xs);
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return Err(Error::InvalidParameter("degenerate sample in normality test".into()));
    }
    let normal = Normal::standard();
    let nf = n as f64;
    let mut a2 = -nf;
    for i in 0..n {
        let z_low = (xs[i] - mean) / sd;
        let z_high = (xs[n - 1 - i] - mean) / sd;
        let cdf_low = normal.cdf(z_low).clamp(1e-300, 1.0 - 1e-16);
        let sf_high = (1.0 - normal.cdf(z_high)).clamp(1e-300, 1.0);
        a2 -= (2.0 * i as f64 + 1.0) / nf * (cdf_low.ln() + sf_high.ln());
    }
    Ok(a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf)))
}

/// Sample mean, unbiased variance and the standard error of the mean.
pub fn mean_var_se(sample: &[f64]) -> (f64, f64, f64) {
    let n = sample.len() as f64;
    let mean = sample.iter().sum::<f64>() / n;
    if sample.len() < 2 {
        return (mean, 0.0, 0.0);
    }
    let var = sample.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var, (var / n).sqrt())
}

/// Standard error of the sample variance under approximate normality.
pub fn variance_se(sample: &[f64]) -> f64 {
    let (_, var, _) = mean_var_se(sample);
    var * (2.0 / (sample.len() as f64 - 1.0)).sqrt()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let xbar = lx.iter().sum::<f64>() / n;
    let ybar = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let den: f64 = lx.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    num / den
}

/// Pearson correlation coefficient.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / n;
    let ybar = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - xbar) * (y - ybar);
        sxx += (x - xbar) * (x - xbar);
        syy += (y - ybar) * (y - ybar);
    }
    sxy / (sxx * syy).sqrt()
}

/// Standard normal density (exposed for harness diagnostics).
pub fn normal_pdf(z: f64) -> f64 {
    Normal::standard().pdf(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{standard_normal, uniform01, SeedPolicy, StreamDomain};

    #[test]
    fn identical_samples_have_zero_statistic() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (stat, p) = two_sample_ks(&xs, &xs).unwrap();
        assert_eq!(stat, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_supports_have_statistic_one() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let ys: Vec<f64> = (0..100).map(|i| 1000.0 + i as f64).collect();
        let (stat, p) = two_sample_ks(&xs, &ys).unwrap();
        assert_eq!(stat, 1.0);
        assert!(p < 1e-10);
    }

    #[test]
    fn shifted_uniforms_give_half_overlap() {
        // Exact CDF overlap of U(0,1) vs U(0.5,1.5) is 1/2; the empirical
        // statistic over 1000 draws each lands nearby.
        let policy = SeedPolicy::new(31);
        let mut rng = policy.stream(StreamDomain::Verify, 0, 0);
        let a: Vec<f64> = (0..1000).map(|_| uniform01(&mut rng)).collect();
        let b: Vec<f64> = (0..1000).map(|_| 0.5 + uniform01(&mut rng)).collect();
        let (stat, p) = two_sample_ks(&a, &b).unwrap();
        assert!((stat - 0.5).abs() < 0.08, "stat {stat}");
        assert!(p < 1e-6);
    }

    #[test]
    fn same_law_passes_at_one_percent() {
        let policy = SeedPolicy::new(77);
        let mut rng = policy.stream(StreamDomain::Verify, 1, 0);
        let a: Vec<f64> = (0..800).map(|_| standard_normal(&mut rng)).collect();
        let b: Vec<f64> = (0..1200).map(|_| standard_normal(&mut rng)).collect();
        let (_, p) = two_sample_ks(&a, &b).unwrap();
        assert!(p > 0.01, "p = {p}");
    }

    #[test]
    fn undersized_samples_are_rejected() {
        let xs = vec![0.0; 10];
        let ys = vec![0.0; 100];
        assert!(matches!(
            two_sample_ks(&xs, &ys),
            Err(Error::SampleTooSmall { .. })
        ));
    }

    #[test]
    fn kolmogorov_sf_matches_reference_points() {
        // Classic table values of the Kolmogorov distribution.
        assert!((kolmogorov_sf(1.36) - 0.0505).abs() < 2e-3);
        assert!((kolmogorov_sf(1.63) - 0.0102).abs() < 1e-3);
        assert!(kolmogorov_sf(0.2) > 0.999);
        assert!((kolmogorov_sf(0.8281) - 0.5).abs() < 0.01);
    }

    #[test]
    fn anderson_darling_accepts_normal_rejects_uniform() {
        let policy = SeedPolicy::new(5151);
        let mut rng = policy.stream(StreamDomain::Verify, 2, 0);
        let normal: Vec<f64> = (0..5000).map(|_| 2.0 + 3.0 * standard_normal(&mut rng)).collect();
        let a2 = anderson_darling_normal(&normal).unwrap();
        assert!(a2 < AD_CRITICAL_1PCT, "A*2 = {a2} on normal data");

        let uniform: Vec<f64> = (0..5000).map(|_| uniform01(&mut rng)).collect();
        let a2u = anderson_darling_normal(&uniform).unwrap();
        assert!(a2u > AD_CRITICAL_1PCT, "A*2 = {a2u} on uniform data");
    }

    #[test]
    fn slope_of_exact_power_law() {
        let xs = [50.0, 200.0, 800.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-0.5)).collect();
        let slope = loglog_slope(&xs, &ys);
        assert!((slope + 0.5).abs() < 1e-12);
    }

    #[test]
    fn correlation_of_linear_data_is_one() {
        let xs: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        assert!((correlation(&xs, &ys) - 1.0).abs() < 1e-12);
        let zs: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert!((correlation(&xs, &zs) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn moment_helpers_are_consistent() {
        let xs = [2.0, 4.0, 6.0, 8.0, 10.0];
        let (mean, var, se) = mean_var_se(&xs);
        assert_eq!(mean, 6.0);
        assert_eq!(var, 10.0);
        assert!((se - (10.0f64 / 5.0).sqrt()).abs() < 1e-12);
        assert!((variance_se(&xs) - 10.0 * (2.0f64 / 4.0).sqrt()).abs() < 1e-12);
    }
}
