//! Small statistical toolbox shared by the diagnostics: means with standard
//! errors, batch means, Wilson intervals, Kolmogorov–Smirnov, chi-square.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

pub fn mean_se(values: &[f64]) -> MeanEstimate {
    let n = values.len();
    if n == 0 {
        return MeanEstimate {
            mean: f64::NAN,
            std_error: f64::NAN,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    MeanEstimate {
        mean,
        std_error: (var / n as f64).sqrt(),
        n,
    }
}

/// Mean with a batch-means standard error, for autocorrelated sequences.
pub fn batch_means(values: &[f64], n_batches: usize) -> MeanEstimate {
    let n = values.len();
    let n_batches = n_batches.clamp(2, n.max(2));
    let size = n / n_batches;
    if size == 0 {
        return mean_se(values);
    }
    let means: Vec<f64> = values
        .chunks_exact(size)
        .take(n_batches)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let b = mean_se(&means);
    MeanEstimate {
        mean: values.iter().sum::<f64>() / n as f64,
        std_error: b.std_error,
        n,
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let centre = (p + z2 / (2.0 * n_f)) / denom;
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`; ties are
/// handled by stepping over all equal values at once.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a: Vec<f64> = a.to_vec();
    let mut b: Vec<f64> = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS statistic at level `alpha`.
pub fn ks_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct KsTest {
    pub statistic: f64,
    pub critical_1pct: f64,
    pub pass: bool,
}

pub fn ks_test(a: &[f64], b: &[f64]) -> KsTest {
    let statistic = ks_two_sample(a, b);
    let critical_1pct = ks_critical(a.len(), b.len(), 0.01);
    KsTest {
        statistic,
        critical_1pct,
        pass: statistic < critical_1pct,
    }
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct Autocorrelation {
    pub lag1: f64,
    pub z: f64,
    pub p_value: f64,
    /// `3 / sqrt(n)`
    pub band: f64,
    pub pass: bool,
}

pub fn lag1_autocorrelation(values: &[f64]) -> Autocorrelation {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let var: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let cov: f64 = values.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    let lag1 = if var > 0.0 { cov / var } else { 0.0 };
    let z = lag1 * (n as f64).sqrt();
    let band = 3.0 / (n as f64).sqrt();
    Autocorrelation {
        lag1,
        z,
        p_value: 2.0 * (1.0 - normal_cdf(z.abs())),
        band,
        pass: lag1.abs() <= band,
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub df: usize,
    pub critical_1pct: f64,
    pub p_value: f64,
    pub pass: bool,
}

/// Chi-square goodness of fit of positive integer data against
/// `Geometric(p)` on `{1, 2, ...}`. Cells are merged into a tail cell so every
/// expected count is at least 5.
pub fn chi_square_geometric(lengths: &[usize], p: f64) -> ChiSquareTest {
    let n = lengths.len() as f64;
    let prob = |k: usize| p * (1.0 - p).powi(k as i32 - 1);
    let mut last = 1usize;
    while n * (1.0 - p).powi(last as i32) >= 5.0 && n * prob(last + 1) >= 5.0 {
        last += 1;
    }
    // cells 1..=last-1 individually, tail cell >= last
    let mut observed = vec![0usize; last];
    for &l in lengths {
        let cell = l.clamp(1, last) - 1;
        observed[cell] += 1;
    }
    let mut statistic = 0.0;
    for (cell, &obs) in observed.iter().enumerate() {
        let k = cell + 1;
        let expected = if k < last {
            n * prob(k)
        } else {
            n * (1.0 - p).powi(last as i32 - 1)
        };
        statistic += (obs as f64 - expected).powi(2) / expected;
    }
    let df = last.saturating_sub(1).max(1);
    let dist = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    let critical_1pct = dist.inverse_cdf(0.99);
    ChiSquareTest {
        statistic,
        df,
        critical_1pct,
        p_value: 1.0 - dist.cdf(statistic),
        pass: statistic < critical_1pct,
    }
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Empirical quantile (type 1, inverse of the ECDF) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
