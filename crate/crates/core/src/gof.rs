//! Goodness-of-fit and dependence tests used by the validation suite.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF, with the
/// asymptotic Kolmogorov p-value (Stephens' small-sample correction).
pub fn ks_test(sample: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestResult> {
    if sample.is_empty() {
        return Err(invalid("sample", "empty sample"));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    Ok(TestResult {
        statistic: d,
        p_value: kolmogorov_survival(lambda),
    })
}

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pearson chi-square test of counts against cell probabilities.
pub fn chi_square_test(observed: &[u64], probs: &[f64]) -> Result<TestResult> {
    if observed.len() != probs.len() || observed.len() < 2 {
        return Err(invalid(
            "observed",
            "need matching counts and probabilities for ≥ 2 cells",
        ));
    }
    let total: u64 = observed.iter().sum();
    let psum: f64 = probs.iter().sum();
    if total == 0 || (psum - 1.0).abs() > 1e-9 || probs.iter().any(|p| *p <= 0.0) {
        return Err(invalid("probs", "probabilities must be positive and sum to one"));
    }
    let n = total as f64;
    let stat: f64 = observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| (o as f64 - n * p).powi(2) / (n * p))
        .sum();
    let dist = ChiSquared::new((observed.len() - 1) as f64).expect("positive degrees of freedom");
    Ok(TestResult {
        statistic: stat,
        p_value: dist.sf(stat),
    })
}

/// Total-variation distance between two probability vectors.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Ranks starting at 1, ties receiving their average rank.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let rank = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(invalid("x", "need two equally long samples of length ≥ 3"));
    }
    Ok(pearson(&ranks(x), &ranks(y)))
}

/// Ljung–Box portmanteau test for autocorrelation up to `lags`.
pub fn ljung_box(x: &[f64], lags: usize) -> Result<TestResult> {
    let n = x.len();
    if lags == 0 || n <= lags + 1 {
        return Err(invalid("lags", "need 1 ≤ lags < len − 1"));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c0: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let mut q = 0.0;
    for k in 1..=lags {
        let ck: f64 = (k..n).map(|i| (x[i] - mean) * (x[i - k] - mean)).sum();
        let r = ck / c0;
        q += r * r / (n - k) as f64;
    }
    q *= (n * (n + 2)) as f64;
    let dist = ChiSquared::new(lags as f64).expect("positive degrees of freedom");
    Ok(TestResult {
        statistic: q,
        p_value: dist.sf(q),
    })
}
