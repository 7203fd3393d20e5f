//! Girsanov log-likelihood and the statistics it depends on.
//!
//! For a drift `b = Σ c_k ψ_k` the log-likelihood of a unit-diffusion path
//! relative to Wiener measure is the quadratic form `cᵀμ − ½cᵀΣc` with
//!
//! ```text
//! μ_k  = ∫ ψ_k(X_t) dX_t         (left-point Itô sum)
//! Σ_kl = ∫ ψ_k(X_t) ψ_l(X_t) dt  (left-point Riemann sum)
//! ```
//!
//! For periodic differentiable families the same statistics can be read off
//! the periodic occupation density `L°` and the winding field `χ°`:
//!
//! ```text
//! μ_k  = ∫_0^1 χ°(x) ψ_k(x) dx − ½ ∫_0^1 L°(x) ψ_k'(x) dx
//! Σ_kl = ∫_0^1 L°(x) ψ_k(x) ψ_l(x) dx
//! ```

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::basis::{BasisFamily, BasisKind, Drift};
use crate::error::{invalid, Error, Result};
use crate::path::SamplePath;

/// Left-point discretization of `∫ b(X) dX − ½ ∫ b²(X) dt`.
pub fn log_girsanov<D: Drift + ?Sized>(path: &SamplePath, drift: &D) -> Result<f64> {
    let dt = path.dt();
    let mut ito = 0.0;
    let mut energy = 0.0;
    for (i, w) in path.values().windows(2).enumerate() {
        let b = drift.eval(w[0]);
        if !b.is_finite() {
            return Err(Error::NonFiniteDrift { index: i, x: w[0] });
        }
        ito += b * (w[1] - w[0]);
        energy += b * b;
    }
    Ok(ito - 0.5 * energy * dt)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub horizon: f64,
}

#[derive(Serialize, Deserialize)]
struct StatsJson {
    m: usize,
    #[serde(rename = "T")]
    horizon: f64,
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
}

impl SufficientStats {
    /// Statistics of an empty record: `μ = 0`, `Σ = 0`.
    pub fn zeros(m: usize, horizon: f64) -> Self {
        Self {
            mu: DVector::zeros(m),
            sigma: DMatrix::zeros(m, m),
            horizon,
        }
    }

    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>, horizon: f64) -> Result<Self> {
        if sigma.nrows() != mu.len() || sigma.ncols() != mu.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                got: sigma.nrows(),
            });
        }
        let stats = Self { mu, sigma, horizon };
        stats.validate()?;
        Ok(stats)
    }

    pub fn m(&self) -> usize {
        self.mu.len()
    }

    /// Checks symmetry and positive semidefiniteness of `Σ` (to `1e-8` of
    /// its largest eigenvalue).
    pub fn validate(&self) -> Result<()> {
        let m = self.m();
        if m == 0 {
            return Ok(());
        }
        let scale = self.sigma.amax().max(f64::MIN_POSITIVE);
        for i in 0..m {
            for j in 0..i {
                if (self.sigma[(i, j)] - self.sigma[(j, i)]).abs() > 1e-12 * scale {
                    return Err(invalid("sigma", "statistics matrix is not symmetric"));
                }
            }
        }
        let eig = SymmetricEigen::new(self.sigma.clone()).eigenvalues;
        let max = eig.max();
        let min = eig.min();
        if min < -1e-8 * max.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        Ok(())
    }

    /// Leading `m`-dimensional block.
    pub fn leading(&self, m: usize) -> Result<SufficientStats> {
        if m > self.m() {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: self.m(),
            });
        }
        Ok(SufficientStats {
            mu: self.mu.rows(0, m).into_owned(),
            sigma: self.sigma.view((0, 0), (m, m)).into_owned(),
            horizon: self.horizon,
        })
    }

    /// `cᵀμ − ½cᵀΣc`, the log-likelihood of `Σ c_k ψ_k`.
    pub fn quadratic_form(&self, c: &[f64]) -> Result<f64> {
        if c.len() != self.m() {
            return Err(Error::DimensionMismatch {
                expected: self.m(),
                got: c.len(),
            });
        }
        let c = DVector::from_column_slice(c);
        Ok(c.dot(&self.mu) - 0.5 * (&self.sigma * &c).dot(&c))
    }

    pub fn to_json(&self) -> Result<String> {
        let dto = StatsJson {
            m: self.m(),
            horizon: self.horizon,
            mu: self.mu.iter().copied().collect(),
            sigma: self.sigma.row_iter().map(|r| r.iter().copied().collect()).collect(),
        };
        Ok(serde_json::to_string_pretty(&dto)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let dto: StatsJson = serde_json::from_str(s)?;
        if dto.mu.len() != dto.m || dto.sigma.len() != dto.m || dto.sigma.iter().any(|r| r.len() != dto.m) {
            return Err(Error::Parse("stats JSON dimensions disagree with `m`".into()));
        }
        let sigma = DMatrix::from_fn(dto.m, dto.m, |i, j| dto.sigma[i][j]);
        SufficientStats::new(DVector::from_vec(dto.mu), sigma, dto.horizon)
    }
}

/// `μ` and `Σ` of `path` for `ψ_1, …, ψ_m`.
///
/// Fourier statistics are assembled from the trigonometric moments
/// `Σ_i cos(2πf X_i)`, `Σ_i sin(2πf X_i)` for `f ≤ 2⌈m/2⌉` via
/// product-to-sum identities, which is `O(n·m)` instead of `O(n·m²)`.
/// Indicator statistics are diagonal.
pub fn sufficient_statistics(path: &SamplePath, family: &BasisFamily, m: usize) -> Result<SufficientStats> {
    family.check_count(m)?;
    let stats = match family.kind() {
        BasisKind::Fourier => fourier_statistics(path, m),
        BasisKind::Indicator { .. } => indicator_statistics(path, family, m),
        BasisKind::Tabulated(_) => generic_statistics(path, family, m),
    };
    Ok(stats)
}

fn fourier_statistics(path: &SamplePath, m: usize) -> SufficientStats {
    use std::f64::consts::PI;
    let kmax = m.div_ceil(2);
    let fmax = 2 * kmax;
    // cos_sum[f], sin_sum[f]: Σ_i cos/sin(2πf X_i) over left points
    let mut cos_sum = vec![0.0; fmax + 1];
    let mut sin_sum = vec![0.0; fmax + 1];
    // Itô moments for f ≤ kmax
    let mut cos_ito = vec![0.0; kmax + 1];
    let mut sin_ito = vec![0.0; kmax + 1];
    let values = path.values();
    for w in values.windows(2) {
        let (s1, c1) = (2.0 * PI * w[0].rem_euclid(1.0)).sin_cos();
        let dx = w[1] - w[0];
        let (mut s, mut c) = (s1, c1);
        for f in 1..=fmax {
            cos_sum[f] += c;
            sin_sum[f] += s;
            if f <= kmax {
                cos_ito[f] += c * dx;
                sin_ito[f] += s * dx;
            }
            let next_c = c * c1 - s * s1;
            s = s * c1 + c * s1;
            c = next_c;
        }
    }
    let dt = path.dt();
    let n = path.n_steps() as f64;
    let cos_int = |f: usize| if f == 0 { n * dt } else { cos_sum[f] * dt };
    let sin_int = |f: i64| {
        if f == 0 {
            0.0
        } else if f > 0 {
            sin_sum[f as usize] * dt
        } else {
            -sin_sum[(-f) as usize] * dt
        }
    };
    // index k (1-based) -> (frequency, is_sine)
    let split = |k: usize| (k.div_ceil(2), k % 2 == 1);
    let mut sigma = DMatrix::zeros(m, m);
    for k in 1..=m {
        let (a, sin_a) = split(k);
        for l in k..=m {
            let (b, sin_b) = split(l);
            let diff = a.abs_diff(b);
            let v = match (sin_a, sin_b) {
                (true, true) => cos_int(diff) - cos_int(a + b),
                (false, false) => cos_int(diff) + cos_int(a + b),
                (true, false) => sin_int((a + b) as i64) + sin_int(a as i64 - b as i64),
                (false, true) => sin_int((a + b) as i64) + sin_int(b as i64 - a as i64),
            };
            sigma[(k - 1, l - 1)] = v;
            sigma[(l - 1, k - 1)] = v;
        }
    }
    let mu = DVector::from_fn(m, |i, _| {
        let (f, is_sin) = split(i + 1);
        std::f64::consts::SQRT_2 * if is_sin { sin_ito[f] } else { cos_ito[f] }
    });
    SufficientStats {
        mu,
        sigma,
        horizon: path.duration(),
    }
}

fn indicator_statistics(path: &SamplePath, family: &BasisFamily, m: usize) -> SufficientStats {
    let mut mu = DVector::zeros(m);
    let mut occupation = vec![0.0; m];
    let mut vals = vec![0.0; m];
    for w in path.values().windows(2) {
        if let Some(c) = family.cell_of(w[0]) {
            if c < m {
                family.fill_values(w[0], &mut vals);
                let h = vals[c];
                mu[c] += h * (w[1] - w[0]);
                occupation[c] += h * h;
            }
        }
    }
    let dt = path.dt();
    SufficientStats {
        mu,
        sigma: DMatrix::from_diagonal(&DVector::from_iterator(m, occupation.into_iter().map(|o| o * dt))),
        horizon: path.duration(),
    }
}

fn generic_statistics(path: &SamplePath, family: &BasisFamily, m: usize) -> SufficientStats {
    let mut mu = DVector::zeros(m);
    let mut sigma = DMatrix::zeros(m, m);
    let mut vals = vec![0.0; m];
    for w in path.values().windows(2) {
        family.fill_values(w[0], &mut vals);
        let dx = w[1] - w[0];
        for k in 0..m {
            mu[k] += vals[k] * dx;
            for l in k..m {
                sigma[(k, l)] += vals[k] * vals[l];
            }
        }
    }
    sigma *= path.dt();
    sigma.fill_lower_triangle_with_upper_triangle();
    SufficientStats {
        mu,
        sigma,
        horizon: path.duration(),
    }
}

/// Periodic occupation density and winding field on `cells` equal cells of
/// `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationFields {
    pub local_time: Vec<f64>,
    pub winding: Vec<i64>,
    pub horizon: f64,
}

impl OccupationFields {
    pub fn cells(&self) -> usize {
        self.local_time.len()
    }

    pub fn width(&self) -> f64 {
        1.0 / self.cells() as f64
    }

    /// Midpoint of cell `c`.
    pub fn midpoint(&self, c: usize) -> f64 {
        (c as f64 + 0.5) * self.width()
    }

    /// `∫_0^1 L°(x) dx`.
    pub fn total_occupation(&self) -> f64 {
        self.local_time.iter().sum::<f64>() * self.width()
    }

    /// `∫_0^1 χ°(x) dx`.
    pub fn total_winding(&self) -> f64 {
        self.winding.iter().map(|&w| w as f64).sum::<f64>() * self.width()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,local_time,winding")?;
        for c in 0..self.cells() {
            writeln!(w, "{},{},{}", self.midpoint(c), self.local_time[c], self.winding[c])?;
        }
        Ok(())
    }
}

/// Histogram estimate of `L°` (time spent in each cell modulo 1, divided
/// by the cell width) and `χ°` evaluated at cell midpoints.
///
/// Occupation time uses trapezoid weights in time (half a step at each
/// end), which makes `L°` invariant under time reversal and keeps
/// `∫ L° = T`.
pub fn occupation_fields(path: &SamplePath, cells: usize) -> Result<OccupationFields> {
    if cells < 2 {
        return Err(invalid("cells", "need at least 2 cells"));
    }
    let width = 1.0 / cells as f64;
    let dt = path.dt();
    let mut time = vec![0.0; cells];
    let values = path.values();
    let last = values.len() - 1;
    for (i, &x) in values.iter().enumerate() {
        let c = ((x.rem_euclid(1.0) * cells as f64) as usize).min(cells - 1);
        let weight = if i == 0 || i == last { 0.5 * dt } else { dt };
        time[c] += weight;
    }
    let local_time = time.into_iter().map(|t| t / width).collect();
    let (x0, xt) = (path.first(), path.last());
    let winding = (0..cells)
        .map(|c| winding_number(x0, xt, (c as f64 + 0.5) * width))
        .collect();
    Ok(OccupationFields {
        local_time,
        winding,
        horizon: path.duration(),
    })
}

/// `χ°(x)`: signed count of integers `k` with `x + k` strictly between the
/// endpoints.
pub fn winding_number(x0: f64, xt: f64, x: f64) -> i64 {
    // integers strictly inside (a, b): ceil(b) - floor(a) - 1
    let count = |a: f64, b: f64| ((b - x).ceil() - (a - x).floor() - 1.0).max(0.0) as i64;
    if x0 < xt {
        count(x0, xt)
    } else if xt < x0 {
        -count(xt, x0)
    } else {
        0
    }
}

/// `μ` and `Σ` from occupation fields by midpoint quadrature over `[0, 1)`.
pub fn stats_from_occupation(fields: &OccupationFields, family: &BasisFamily, m: usize) -> Result<SufficientStats> {
    if !(family.is_differentiable() && family.is_periodic()) {
        return Err(Error::UnsupportedFamily(family.to_string()));
    }
    family.check_count(m)?;
    let h = fields.width();
    let mut mu = DVector::zeros(m);
    let mut sigma = DMatrix::zeros(m, m);
    let mut vals = vec![0.0; m];
    let mut derivs = vec![0.0; m];
    for c in 0..fields.cells() {
        let x = fields.midpoint(c);
        let lt = fields.local_time[c];
        let chi = fields.winding[c] as f64;
        family.fill_values(x, &mut vals);
        for (k, d) in derivs.iter_mut().enumerate() {
            *d = family.derivative(k + 1, x)?;
        }
        for k in 0..m {
            mu[k] += h * (chi * vals[k] - 0.5 * lt * derivs[k]);
            for l in k..m {
                sigma[(k, l)] += h * lt * vals[k] * vals[l];
            }
        }
    }
    sigma.fill_lower_triangle_with_upper_triangle();
    Ok(SufficientStats {
        mu,
        sigma,
        horizon: fields.horizon,
    })
}
