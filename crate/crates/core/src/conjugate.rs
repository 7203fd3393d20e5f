//! Gaussian priors on basis coefficients and their conjugate posteriors.
//!
//! With prior `c ~ N(0, Λ)` and a log-likelihood `cᵀμ − ½cᵀΣc`, the
//! posterior is `N(Q⁻¹μ, Q⁻¹)` with precision `Q = Σ + Λ⁻¹`.
//!
//! The spectral prior is the Gaussian measure with precision operator
//! `η((−Δ)^p + κI)` on 1-periodic functions, written in the Fourier basis,
//! where it is diagonal with
//!
//! ```text
//! 1/λ_k = η (4π² ⌈k/2⌉²)^p + δ
//! ```
//!
//! The additive constant is carried as `δ` (`δ = ηκ` in operator form).

use std::f64::consts::PI;
use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::basis::BasisFamily;
use crate::error::{invalid, Error, Result};
use crate::likelihood::SufficientStats;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrior {
    covariance: DMatrix<f64>,
    precision: DMatrix<f64>,
}

impl GaussianPrior {
    pub fn new(covariance: DMatrix<f64>) -> Result<Self> {
        if !covariance.is_square() || covariance.nrows() == 0 {
            return Err(invalid("covariance", "need a nonempty square matrix"));
        }
        let sym = symmetrize(&covariance);
        if (&sym - &covariance).amax() > 1e-12 * covariance.amax() {
            return Err(invalid("covariance", "covariance must be symmetric"));
        }
        let chol = cholesky(sym.clone())?;
        Ok(Self {
            precision: symmetrize(&chol.inverse()),
            covariance: sym,
        })
    }

    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        if variances.is_empty() {
            return Err(invalid("variances", "need at least one variance"));
        }
        if let Some(v) = variances.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: *v });
        }
        let covariance = DMatrix::from_diagonal(&DVector::from_column_slice(variances));
        let precision = DMatrix::from_diagonal(&DVector::from_iterator(
            variances.len(),
            variances.iter().map(|v| 1.0 / v),
        ));
        Ok(Self { covariance, precision })
    }

    pub fn m(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }
}

/// `λ_k` of the spectral prior (1-based `k`).
pub fn spectral_eigenvalue(eta: f64, delta: f64, p: u32, k: usize) -> f64 {
    1.0 / spectral_precision(eta, delta, p, k)
}

/// `1/λ_k = η (4π²⌈k/2⌉²)^p + δ`.
pub fn spectral_precision(eta: f64, delta: f64, p: u32, k: usize) -> f64 {
    let freq = k.div_ceil(2) as f64;
    eta * (4.0 * PI * PI * freq * freq).powi(p as i32) + delta
}

fn check_spectral(eta: f64, delta: f64, p: u32) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(invalid("eta", format!("must be positive, got {eta}")));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(invalid("delta", format!("must be nonnegative, got {delta}")));
    }
    if p < 2 {
        return Err(invalid("p", format!("must be an integer ≥ 2, got {p}")));
    }
    Ok(())
}

/// The spectral prior truncated to `ψ_1, …, ψ_m`.
pub fn spectral_prior(eta: f64, delta: f64, p: u32, m: usize) -> Result<GaussianPrior> {
    check_spectral(eta, delta, p)?;
    if m == 0 {
        return Err(invalid("m", "need at least one coefficient"));
    }
    let lambdas: Vec<f64> = (1..=m).map(|k| spectral_eigenvalue(eta, delta, p, k)).collect();
    GaussianPrior::diagonal(&lambdas)
}

/// Smallest even `m` with `λ_m / λ_1 < ratio`; even so that sine/cosine
/// pairs are never split.
pub fn spectral_truncation(eta: f64, delta: f64, p: u32, ratio: f64) -> Result<usize> {
    check_spectral(eta, delta, p)?;
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(invalid("ratio", "must lie in (0, 1)"));
    }
    let first = spectral_eigenvalue(eta, delta, p, 1);
    let mut k = 1;
    while spectral_eigenvalue(eta, delta, p, k) / first >= ratio {
        k += 1;
        if k > 1 << 20 {
            return Err(invalid("ratio", "eigenvalues decay too slowly for this ratio"));
        }
    }
    Ok(k + k % 2)
}

#[derive(Debug, Clone)]
pub struct GaussianPosterior {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

#[derive(Serialize, Deserialize)]
struct PosteriorJson {
    m: usize,
    mean: Vec<f64>,
    precision: Vec<Vec<f64>>,
}

impl GaussianPosterior {
    /// From a mean and a precision matrix.
    pub fn from_precision(mean: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        if precision.nrows() != mean.len() || !precision.is_square() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: precision.nrows(),
            });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(invalid("mean", "posterior mean must be finite"));
        }
        let precision = symmetrize(&precision);
        let chol = cholesky(precision.clone())?;
        Ok(Self { mean, precision, chol })
    }

    pub fn m(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// One exact draw: `mean + L⁻ᵀ z` where `precision = L Lᵀ`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.m(), |_, _| rng.sample::<f64, _>(StandardNormal));
        let l = self.chol.l();
        let v = l
            .transpose()
            .solve_upper_triangular(&z)
            .expect("Cholesky factor has a positive diagonal");
        &self.mean + v
    }

    /// Posterior mean of `b(x) = Σ c_k ψ_k(x)`.
    pub fn mean_at(&self, family: &BasisFamily, x: f64) -> f64 {
        let psi = basis_vector(family, self.m(), x);
        psi.dot(&self.mean)
    }

    /// Posterior standard deviation of `b(x)`: `sqrt(ψ(x)ᵀ Q⁻¹ ψ(x))`.
    pub fn sd_at(&self, family: &BasisFamily, x: f64) -> f64 {
        let psi = basis_vector(family, self.m(), x);
        let w = self
            .chol
            .l()
            .solve_lower_triangular(&psi)
            .expect("Cholesky factor has a positive diagonal");
        w.norm()
    }

    pub fn to_json(&self) -> Result<String> {
        let dto = PosteriorJson {
            m: self.m(),
            mean: self.mean.iter().copied().collect(),
            precision: self.precision.row_iter().map(|r| r.iter().copied().collect()).collect(),
        };
        Ok(serde_json::to_string_pretty(&dto)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let dto: PosteriorJson = serde_json::from_str(s)?;
        if dto.mean.len() != dto.m || dto.precision.len() != dto.m || dto.precision.iter().any(|r| r.len() != dto.m) {
            return Err(Error::Parse("posterior JSON dimensions disagree with `m`".into()));
        }
        let precision = DMatrix::from_fn(dto.m, dto.m, |i, j| dto.precision[i][j]);
        Self::from_precision(DVector::from_vec(dto.mean), precision)
    }
}

fn basis_vector(family: &BasisFamily, m: usize, x: f64) -> DVector<f64> {
    let mut v = vec![0.0; m];
    family.fill_values(x, &mut v);
    DVector::from_vec(v)
}

fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn cholesky(a: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    match Cholesky::new(a.clone()) {
        Some(c) => Ok(c),
        None => Err(Error::NotPositiveDefinite {
            min_eigenvalue: SymmetricEigen::new(a).eigenvalues.min(),
        }),
    }
}

/// Conjugate update: precision `Σ + Λ⁻¹`, mean solving `(Σ + Λ⁻¹) m = μ`.
pub fn posterior(stats: &SufficientStats, prior: &GaussianPrior) -> Result<GaussianPosterior> {
    if stats.m() != prior.m() {
        return Err(Error::DimensionMismatch {
            expected: prior.m(),
            got: stats.m(),
        });
    }
    let precision = symmetrize(&(&stats.sigma + prior.precision()));
    let chol = cholesky(precision.clone())?;
    let mean = chol.solve(&stats.mu);
    if mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: SymmetricEigen::new(precision).eigenvalues.min(),
        });
    }
    Ok(GaussianPosterior { mean, precision, chol })
}

/// One draw from the posterior coefficient law.
pub fn sample_coeffs<R: Rng + ?Sized>(post: &GaussianPosterior, rng: &mut R) -> DVector<f64> {
    post.sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub x: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

impl BandPoint {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

fn check_level(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(
            "level",
            format!("credible level must lie in (0, 1), got {level}"),
        ));
    }
    let normal = Normal::standard();
    Ok(normal.inverse_cdf(0.5 + 0.5 * level))
}

/// Exact pointwise Gaussian bands `mean(x) ± z·sd(x)`.
pub fn credible_bands(
    post: &GaussianPosterior,
    family: &BasisFamily,
    xs: &[f64],
    level: f64,
) -> Result<Vec<BandPoint>> {
    let z = check_level(level)?;
    Ok(xs
        .iter()
        .map(|&x| {
            let mean = post.mean_at(family, x);
            let half = z * post.sd_at(family, x);
            BandPoint {
                x,
                mean,
                lower: mean - half,
                upper: mean + half,
            }
        })
        .collect())
}

/// Bands from empirical quantiles of `n_draws` posterior draws; used to
/// cross-check [`credible_bands`].
pub fn mc_credible_bands<R: Rng + ?Sized>(
    post: &GaussianPosterior,
    family: &BasisFamily,
    xs: &[f64],
    level: f64,
    n_draws: usize,
    rng: &mut R,
) -> Result<Vec<BandPoint>> {
    check_level(level)?;
    if n_draws < 2 {
        return Err(invalid("n_draws", "need at least 2 draws"));
    }
    let basis: Vec<DVector<f64>> = xs.iter().map(|&x| basis_vector(family, post.m(), x)).collect();
    let mut evals = vec![Vec::with_capacity(n_draws); xs.len()];
    for _ in 0..n_draws {
        let c = post.sample(rng);
        for (e, psi) in evals.iter_mut().zip(&basis) {
            e.push(psi.dot(&c));
        }
    }
    Ok(xs
        .iter()
        .zip(evals)
        .map(|(&x, mut e)| {
            let mean = e.iter().sum::<f64>() / n_draws as f64;
            e.sort_by(f64::total_cmp);
            BandPoint {
                x,
                mean,
                lower: quantile_sorted(&e, 0.5 - 0.5 * level),
                upper: quantile_sorted(&e, 0.5 + 0.5 * level),
            }
        })
        .collect())
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let w = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - w) + sorted[i + 1] * w
    } else {
        sorted[i]
    }
}

pub fn write_bands_csv<W: Write>(bands: &[BandPoint], mut w: W) -> Result<()> {
    writeln!(w, "x,mean,lower,upper")?;
    for b in bands {
        writeln!(w, "{},{},{},{}", b.x, b.mean, b.lower, b.upper)?;
    }
    Ok(())
}

pub fn read_bands_csv<R: std::io::BufRead>(r: R) -> Result<Vec<BandPoint>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line.trim() != "x,mean,lower,upper" {
                return Err(Error::Parse(format!("expected bands header, got `{line}`")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if cols.len() != 4 {
            return Err(Error::Parse(format!("line {}: expected 4 columns", i + 1)));
        }
        out.push(BandPoint {
            x: cols[0],
            mean: cols[1],
            lower: cols[2],
            upper: cols[3],
        });
    }
    Ok(out)
}

/// Empirical Hölder exponent of functions sampled on a uniform periodic
/// grid: half the log-log slope of the mean squared `order`-th difference
/// against the lag. `order` must exceed the exponent being measured.
pub fn holder_exponent(samples: &[Vec<f64>], order: usize, lags: &[usize]) -> Result<f64> {
    if samples.is_empty() || lags.len() < 2 || order == 0 {
        return Err(invalid("samples", "need samples, an order ≥ 1 and at least two lags"));
    }
    let n = samples[0].len();
    let binom: Vec<f64> = (0..=order)
        .map(|i| {
            let c = (0..i).fold(1.0, |acc, j| acc * (order - j) as f64 / (j + 1) as f64);
            if i % 2 == 0 {
                c
            } else {
                -c
            }
        })
        .collect();
    let points: Vec<(f64, f64)> = lags
        .iter()
        .map(|&lag| {
            let mut acc = 0.0;
            for f in samples {
                for i in 0..n {
                    let d: f64 = binom.iter().enumerate().map(|(j, b)| b * f[(i + j * lag) % n]).sum();
                    acc += d * d;
                }
            }
            ((lag as f64 / n as f64).ln(), (acc / (samples.len() * n) as f64).ln())
        })
        .collect();
    Ok(0.5 * ols_slope(&points).0)
}

/// Least-squares slope and its standard error.
pub fn ols_slope(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let resid: f64 = points.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let se = if points.len() > 2 {
        (resid / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    (slope, se)
}

/// Hölder exponent estimated from `n_draws` spectral-prior draws evaluated
/// on a grid of `grid` points, using second- or third-order differences as
/// the expected exponent `p − ½` requires.
pub fn spectral_prior_holder_exponent<R: Rng + ?Sized>(
    eta: f64,
    delta: f64,
    p: u32,
    m: usize,
    grid: usize,
    n_draws: usize,
    rng: &mut R,
) -> Result<f64> {
    let prior = spectral_prior(eta, delta, p, m)?;
    let family = BasisFamily::fourier();
    let sds: Vec<f64> = prior.covariance().diagonal().iter().map(|v| v.sqrt()).collect();
    let mut vals = vec![0.0; m];
    let draws: Vec<Vec<f64>> = (0..n_draws)
        .map(|_| {
            let c: Vec<f64> = sds.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)).collect();
            (0..grid)
                .map(|i| {
                    family.fill_values(i as f64 / grid as f64, &mut vals);
                    vals.iter().zip(&c).map(|(v, c)| v * c).sum()
                })
                .collect()
        })
        .collect();
    let order = p as usize;
    let lags: Vec<usize> = (0..5).map(|i| (grid / 512).max(1) << i).collect();
    holder_exponent(&draws, order, &lags)
}
