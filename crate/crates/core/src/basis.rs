//! Basis families for drift expansions.
//!
//! Two concrete families are provided:
//!
//! * `Fourier`: the 1-periodic orthonormal system
//!   `ψ_{2k-1}(x) = √2 sin(2πkx)`, `ψ_{2k}(x) = √2 cos(2πkx)`, `k ≥ 1`.
//!   These are the eigenfunctions of the periodic Laplacian, so the spectral
//!   prior in [`crate::conjugate`] is diagonal in this basis.
//! * `Indicator`: unnormalized (height 1) indicators of `cells` equal-length
//!   subintervals of `[lo, hi]`; zero outside.
//!
//! A tabulated periodic family (linear interpolation on a uniform grid over
//! `[0, 1)`) is the extension point for other systems.
//!
//! Indices are 1-based throughout, matching the usual `ψ_1, ψ_2, …` labels.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Anything that can be evaluated as a scalar drift `b(x)`.
pub trait Drift {
    fn eval(&self, x: f64) -> f64;
}

impl<F: Fn(f64) -> f64> Drift for F {
    fn eval(&self, x: f64) -> f64 {
        self(x)
    }
}

/// A periodic family given by samples on a uniform grid over `[0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedFamily {
    functions: Vec<Vec<f64>>,
}

impl TabulatedFamily {
    pub fn new(functions: Vec<Vec<f64>>) -> Result<Self> {
        let n = functions.first().map(Vec::len).unwrap_or(0);
        if n < 2 {
            return Err(invalid("functions", "need at least one function with 2 samples"));
        }
        if functions.iter().any(|f| f.len() != n) {
            return Err(invalid("functions", "all tabulated functions need the same grid"));
        }
        if functions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("functions", "tabulated values must be finite"));
        }
        Ok(Self { functions })
    }

    fn eval(&self, k: usize, x: f64) -> f64 {
        let f = &self.functions[k - 1];
        let n = f.len();
        let pos = x.rem_euclid(1.0) * n as f64;
        let i = (pos.floor() as usize).min(n - 1);
        let w = pos - i as f64;
        f[i] * (1.0 - w) + f[(i + 1) % n] * w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BasisKind {
    Fourier,
    Indicator {
        lo: f64,
        hi: f64,
        cells: usize,
        normalized: bool,
    },
    Tabulated(TabulatedFamily),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisFamily {
    kind: BasisKind,
    /// Explicit level bounds `m_1 < m_2 < …`; `None` means the family default.
    levels: Option<Vec<usize>>,
}

impl BasisFamily {
    pub fn fourier() -> Self {
        Self {
            kind: BasisKind::Fourier,
            levels: None,
        }
    }

    pub fn indicator(lo: f64, hi: f64, cells: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid("interval", format!("need finite lo < hi, got {lo}..{hi}")));
        }
        if cells == 0 {
            return Err(invalid("cells", "need at least one cell"));
        }
        Ok(Self {
            kind: BasisKind::Indicator {
                lo,
                hi,
                cells,
                normalized: false,
            },
            levels: None,
        })
    }

    pub fn tabulated(family: TabulatedFamily) -> Self {
        Self {
            kind: BasisKind::Tabulated(family),
            levels: None,
        }
    }

    /// Rescale indicators to unit L² norm (height `1/√width`).
    pub fn normalized(mut self, on: bool) -> Self {
        if let BasisKind::Indicator { normalized, .. } = &mut self.kind {
            *normalized = on;
        }
        self
    }

    pub fn with_levels(mut self, bounds: Vec<usize>) -> Result<Self> {
        if bounds.is_empty() || bounds[0] == 0 {
            return Err(invalid("levels", "need a nonempty sequence of positive counts"));
        }
        if bounds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("levels", "level bounds must be strictly increasing"));
        }
        if let Some(size) = self.size() {
            if *bounds.last().unwrap() > size {
                return Err(Error::IndexOutOfRange {
                    index: *bounds.last().unwrap(),
                    size,
                });
            }
        }
        self.levels = Some(bounds);
        Ok(self)
    }

    pub fn kind(&self) -> &BasisKind {
        &self.kind
    }

    /// Number of functions, `None` for the infinite Fourier family.
    pub fn size(&self) -> Option<usize> {
        match &self.kind {
            BasisKind::Fourier => None,
            BasisKind::Indicator { cells, .. } => Some(*cells),
            BasisKind::Tabulated(t) => Some(t.functions.len()),
        }
    }

    pub fn is_periodic(&self) -> bool {
        !matches!(self.kind, BasisKind::Indicator { .. })
    }

    pub fn is_differentiable(&self) -> bool {
        matches!(self.kind, BasisKind::Fourier)
    }

    /// Natural integration domain: `[0, 1]` for periodic families, the
    /// partitioned interval for indicators.
    pub fn domain(&self) -> (f64, f64) {
        match &self.kind {
            BasisKind::Indicator { lo, hi, .. } => (*lo, *hi),
            _ => (0.0, 1.0),
        }
    }

    /// Number of functions in model `j` (1-based). Fourier defaults to
    /// `m_j = 2j`; finite families default to a single level holding all
    /// functions.
    pub fn level_bound(&self, j: usize) -> Result<usize> {
        if j == 0 {
            return Err(invalid("j", "model index is 1-based"));
        }
        if let Some(levels) = &self.levels {
            return levels.get(j - 1).copied().ok_or(Error::IndexOutOfRange {
                index: j,
                size: levels.len(),
            });
        }
        match self.size() {
            None => Ok(2 * j),
            Some(size) if j == 1 => Ok(size),
            Some(_) => Err(Error::IndexOutOfRange { index: j, size: 1 }),
        }
    }

    /// Number of available levels, `None` if unbounded.
    pub fn level_count(&self) -> Option<usize> {
        match (&self.levels, self.size()) {
            (Some(levels), _) => Some(levels.len()),
            (None, None) => None,
            (None, Some(_)) => Some(1),
        }
    }

    pub fn check_index(&self, k: usize) -> Result<()> {
        match self.size() {
            _ if k == 0 => Err(Error::IndexOutOfRange {
                index: 0,
                size: self.size().unwrap_or(usize::MAX),
            }),
            Some(size) if k > size => Err(Error::IndexOutOfRange { index: k, size }),
            _ => Ok(()),
        }
    }

    pub fn check_count(&self, m: usize) -> Result<()> {
        if m == 0 {
            return Err(invalid("m", "need at least one basis function"));
        }
        self.check_index(m)
    }

    /// `ψ_k(x)`.
    pub fn eval(&self, k: usize, x: f64) -> Result<f64> {
        self.check_index(k)?;
        Ok(self.eval_unchecked(k, x))
    }

    pub(crate) fn eval_unchecked(&self, k: usize, x: f64) -> f64 {
        match &self.kind {
            BasisKind::Fourier => {
                let freq = k.div_ceil(2) as f64;
                let phase = TWO_PI * freq * x.rem_euclid(1.0);
                if k % 2 == 1 {
                    SQRT_2 * phase.sin()
                } else {
                    SQRT_2 * phase.cos()
                }
            }
            BasisKind::Indicator { .. } => match self.cell_of(x) {
                Some(c) if c + 1 == k => self.indicator_height(),
                _ => 0.0,
            },
            BasisKind::Tabulated(t) => t.eval(k, x),
        }
    }

    /// `ψ_k'(x)`; only the Fourier family is differentiable.
    pub fn derivative(&self, k: usize, x: f64) -> Result<f64> {
        self.check_index(k)?;
        match &self.kind {
            BasisKind::Fourier => {
                let freq = k.div_ceil(2) as f64;
                let phase = TWO_PI * freq * x.rem_euclid(1.0);
                let scale = SQRT_2 * TWO_PI * freq;
                Ok(if k % 2 == 1 {
                    scale * phase.cos()
                } else {
                    -scale * phase.sin()
                })
            }
            _ => Err(Error::UnsupportedFamily(self.to_string())),
        }
    }

    /// Writes `ψ_1(x), …, ψ_m(x)` into `out` (length `m`). Fourier values
    /// come from the angle-addition recurrence, so one `sin_cos` per point.
    pub fn fill_values(&self, x: f64, out: &mut [f64]) {
        match &self.kind {
            BasisKind::Fourier => {
                let (s1, c1) = (TWO_PI * x.rem_euclid(1.0)).sin_cos();
                let (mut s, mut c) = (s1, c1);
                for pair in out.chunks_mut(2) {
                    pair[0] = SQRT_2 * s;
                    if pair.len() > 1 {
                        pair[1] = SQRT_2 * c;
                    }
                    let next_c = c * c1 - s * s1;
                    s = s * c1 + c * s1;
                    c = next_c;
                }
            }
            BasisKind::Indicator { .. } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                if let Some(c) = self.cell_of(x) {
                    if c < out.len() {
                        out[c] = self.indicator_height();
                    }
                }
            }
            BasisKind::Tabulated(t) => {
                for (k, v) in out.iter_mut().enumerate() {
                    *v = t.eval(k + 1, x);
                }
            }
        }
    }

    /// Zero-based cell containing `x` for indicator families. Cells are
    /// half-open `[left, right)` except the last, which includes `hi`.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        match &self.kind {
            BasisKind::Indicator { lo, hi, cells, .. } => {
                if !(x >= *lo && x <= *hi) {
                    return None;
                }
                let width = (hi - lo) / *cells as f64;
                Some((((x - lo) / width).floor() as usize).min(cells - 1))
            }
            _ => None,
        }
    }

    fn indicator_height(&self) -> f64 {
        match &self.kind {
            BasisKind::Indicator {
                lo,
                hi,
                cells,
                normalized: true,
            } => (*cells as f64 / (hi - lo)).sqrt(),
            _ => 1.0,
        }
    }

    /// Parses `fourier` or `indicator interval=-2..2 cells=20 [normalized]`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut words = spec.split_whitespace();
        match words.next() {
            Some("fourier") => {
                if let Some(extra) = words.next() {
                    return Err(Error::Parse(format!("unexpected basis option `{extra}`")));
                }
                Ok(Self::fourier())
            }
            Some("indicator") => {
                let (mut interval, mut cells, mut normalized) = (None, None, false);
                for w in words {
                    if let Some(v) = w.strip_prefix("interval=") {
                        let (a, b) = v
                            .split_once("..")
                            .ok_or_else(|| Error::Parse(format!("bad interval `{v}`")))?;
                        interval = Some((parse_f64(a)?, parse_f64(b)?));
                    } else if let Some(v) = w.strip_prefix("cells=") {
                        cells = Some(v.parse::<usize>().map_err(|e| Error::Parse(format!("cells: {e}")))?);
                    } else if w == "normalized" {
                        normalized = true;
                    } else {
                        return Err(Error::Parse(format!("unexpected basis option `{w}`")));
                    }
                }
                let (lo, hi) = interval.ok_or_else(|| Error::Parse("indicator basis needs interval=lo..hi".into()))?;
                let cells = cells.ok_or_else(|| Error::Parse("indicator basis needs cells=N".into()))?;
                Ok(Self::indicator(lo, hi, cells)?.normalized(normalized))
            }
            other => Err(Error::Parse(format!("unknown basis kind {other:?}"))),
        }
    }
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::Parse(format!("`{s}`: {e}")))
}

impl fmt::Display for BasisFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            BasisKind::Fourier => write!(f, "fourier"),
            BasisKind::Indicator {
                lo,
                hi,
                cells,
                normalized,
            } => {
                write!(f, "indicator interval={lo}..{hi} cells={cells}")?;
                if *normalized {
                    write!(f, " normalized")?;
                }
                Ok(())
            }
            BasisKind::Tabulated(t) => write!(f, "tabulated({} functions)", t.functions.len()),
        }
    }
}

/// Numeric Gram matrix `∫ ψ_i ψ_j` over the family's domain, midpoint rule
/// with `grid_points` nodes.
pub fn orthonormality_gram(family: &BasisFamily, m: usize, grid_points: usize) -> Result<DMatrix<f64>> {
    family.check_count(m)?;
    if grid_points == 0 {
        return Err(invalid("grid_points", "need at least one node"));
    }
    let (lo, hi) = family.domain();
    let h = (hi - lo) / grid_points as f64;
    let mut gram = DMatrix::zeros(m, m);
    let mut vals = vec![0.0; m];
    for i in 0..grid_points {
        family.fill_values(lo + (i as f64 + 0.5) * h, &mut vals);
        for a in 0..m {
            for b in a..m {
                gram[(a, b)] += vals[a] * vals[b] * h;
            }
        }
    }
    gram.fill_lower_triangle_with_upper_triangle();
    Ok(gram)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    /// Period 1.
    Periodic,
    /// Zero outside `[lo, hi]`.
    Compact { lo: f64, hi: f64 },
}

/// A drift given as a finite expansion in a basis family.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec {
    family: BasisFamily,
    coeffs: Vec<f64>,
    support: Support,
}

impl DriftSpec {
    pub fn family(&self) -> &BasisFamily {
        &self.family
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn support(&self) -> Support {
        self.support
    }

    /// The same expansion with every coefficient outside `keep` set to zero.
    pub fn restricted(&self, keep: impl Fn(usize) -> bool) -> DriftSpec {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| if keep(i + 1) { c } else { 0.0 })
            .collect();
        DriftSpec { coeffs, ..self.clone() }
    }
}

impl Drift for DriftSpec {
    fn eval(&self, x: f64) -> f64 {
        if self.coeffs.is_empty() {
            return 0.0;
        }
        match &self.family.kind {
            BasisKind::Fourier => {
                let (s1, c1) = (TWO_PI * x.rem_euclid(1.0)).sin_cos();
                let (mut s, mut c) = (s1, c1);
                let mut acc = 0.0;
                for pair in self.coeffs.chunks(2) {
                    acc += pair[0] * s;
                    if pair.len() > 1 {
                        acc += pair[1] * c;
                    }
                    let next_c = c * c1 - s * s1;
                    s = s * c1 + c * s1;
                    c = next_c;
                }
                SQRT_2 * acc
            }
            BasisKind::Indicator { .. } => match self.family.cell_of(x) {
                Some(cell) if cell < self.coeffs.len() => self.coeffs[cell] * self.family.indicator_height(),
                _ => 0.0,
            },
            BasisKind::Tabulated(t) => self.coeffs.iter().enumerate().map(|(k, c)| c * t.eval(k + 1, x)).sum(),
        }
    }
}

/// `b = Σ_k c_k ψ_k`.
pub fn synthesize(family: &BasisFamily, coeffs: &[f64]) -> Result<DriftSpec> {
    if !coeffs.is_empty() {
        family.check_count(coeffs.len())?;
    }
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(invalid("coeffs", "coefficients must be finite"));
    }
    let support = match family.kind {
        BasisKind::Indicator { lo, hi, .. } => Support::Compact { lo, hi },
        _ => Support::Periodic,
    };
    Ok(DriftSpec {
        family: family.clone(),
        coeffs: coeffs.to_vec(),
        support,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fourier_point_values() {
        let f = BasisFamily::fourier();
        assert!((f.eval(2, 0.0).unwrap() - SQRT_2).abs() < 1e-15);
        assert!((f.eval(1, 0.25).unwrap() - SQRT_2).abs() < 1e-15);
        assert!(f.eval(0, 0.1).is_err());
    }

    #[test]
    fn indicator_cells_on_minus_two_two() {
        let f = BasisFamily::indicator(-2.0, 2.0, 20).unwrap();
        assert_eq!(f.eval(1, -1.95).unwrap(), 1.0);
        assert_eq!(f.eval(1, 0.0).unwrap(), 0.0);
        assert_eq!(f.eval(20, 2.0).unwrap(), 1.0);
        assert_eq!(f.eval(20, 2.01).unwrap(), 0.0);
        assert!(matches!(
            f.eval(21, 0.0),
            Err(Error::IndexOutOfRange { index: 21, size: 20 })
        ));
    }

    #[test]
    fn gram_matrices() {
        let g = orthonormality_gram(&BasisFamily::fourier(), 4, 1 << 14).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] - want).abs() < 1e-6);
            }
        }
        let g1 = orthonormality_gram(&BasisFamily::fourier(), 1, 1 << 14).unwrap();
        assert!((g1[(0, 0)] - 1.0).abs() < 1e-8);

        let ind = BasisFamily::indicator(-2.0, 2.0, 20).unwrap();
        let g = orthonormality_gram(&ind, 20, 20 * 64).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let want = if i == j { 0.2 } else { 0.0 };
                assert!((g[(i, j)] - want).abs() < 1e-12, "{i},{j}: {}", g[(i, j)]);
            }
        }
        let gn = orthonormality_gram(&ind.clone().normalized(true), 20, 20 * 64).unwrap();
        assert!((gn[(3, 3)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn synthesize_simple_cases() {
        let f = BasisFamily::fourier();
        let zero = synthesize(&f, &[0.0; 6]).unwrap();
        assert_eq!(zero.eval(0.37), 0.0);
        let b = synthesize(&f, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        for &x in &[0.0, 0.1, 0.33, 0.9, -2.4] {
            assert!((b.eval(x) - SQRT_2 * (TWO_PI * x).cos()).abs() < 1e-12);
        }
        assert_eq!(b.support(), Support::Periodic);
        let ind = synthesize(&BasisFamily::indicator(-2.0, 2.0, 4).unwrap(), &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(ind.eval(-1.5), 1.0);
        assert_eq!(ind.eval(1.5), 4.0);
        assert_eq!(ind.eval(3.0), 0.0);
        assert_eq!(ind.support(), Support::Compact { lo: -2.0, hi: 2.0 });
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let f = BasisFamily::fourier();
        let h = 1e-6;
        for k in 1..=8 {
            for &x in &[0.05, 0.3, 0.71] {
                let fd = (f.eval(k, x + h).unwrap() - f.eval(k, x - h).unwrap()) / (2.0 * h);
                let d = f.derivative(k, x).unwrap();
                assert!((fd - d).abs() < 1e-6 * d.abs().max(1.0), "k={k} x={x}");
            }
        }
        assert!(matches!(
            BasisFamily::indicator(0.0, 1.0, 3).unwrap().derivative(1, 0.5),
            Err(Error::UnsupportedFamily(_))
        ));
    }

    #[test]
    fn levels() {
        let f = BasisFamily::fourier();
        assert_eq!(f.level_bound(1).unwrap(), 2);
        assert_eq!(f.level_bound(5).unwrap(), 10);
        let g = BasisFamily::fourier().with_levels(vec![1, 3, 7]).unwrap();
        assert_eq!(g.level_bound(3).unwrap(), 7);
        assert!(g.level_bound(4).is_err());
        assert!(BasisFamily::fourier().with_levels(vec![2, 2]).is_err());
        let ind = BasisFamily::indicator(-2.0, 2.0, 20).unwrap();
        assert_eq!(ind.level_bound(1).unwrap(), 20);
        assert!(ind.clone().with_levels(vec![10, 30]).is_err());
    }

    #[test]
    fn parse_round_trip() {
        let f = BasisFamily::parse("indicator interval=-2..2 cells=20").unwrap();
        assert_eq!(f, BasisFamily::indicator(-2.0, 2.0, 20).unwrap());
        assert_eq!(BasisFamily::parse(&f.to_string()).unwrap(), f);
        assert_eq!(BasisFamily::parse("fourier").unwrap(), BasisFamily::fourier());
        assert!(BasisFamily::parse("wavelet").is_err());
        assert!(BasisFamily::parse("indicator cells=3").is_err());
    }

    #[test]
    fn tabulated_family_interpolates() {
        let t = TabulatedFamily::new(vec![vec![0.0, 1.0, 0.0, -1.0]]).unwrap();
        let f = BasisFamily::tabulated(t);
        assert_eq!(f.eval(1, 0.25).unwrap(), 1.0);
        assert!((f.eval(1, 0.125).unwrap() - 0.5).abs() < 1e-15);
        assert!((f.eval(1, 0.875).unwrap() + 0.5).abs() < 1e-15);
        assert!(!f.is_differentiable());
    }

    proptest! {
        #[test]
        fn fourier_is_exactly_periodic(k in 1usize..64, i in -4096i64..4096) {
            let x = i as f64 / 1024.0;
            let f = BasisFamily::fourier();
            prop_assert_eq!(f.eval(k, x + 1.0).unwrap(), f.eval(k, x).unwrap());
        }

        #[test]
        fn synthesize_matches_direct_sum(coeffs in proptest::collection::vec(-3.0f64..3.0, 1..12), x in -3.0f64..3.0) {
            let f = BasisFamily::fourier();
            let b = synthesize(&f, &coeffs).unwrap();
            let direct: f64 = coeffs.iter().enumerate().map(|(k, c)| c * f.eval(k + 1, x).unwrap()).sum();
            prop_assert!((b.eval(x) - direct).abs() < 1e-12);
        }

        #[test]
        fn synthesize_is_linear(
            c in proptest::collection::vec(-2.0f64..2.0, 6),
            d in proptest::collection::vec(-2.0f64..2.0, 6),
            a in -3.0f64..3.0,
            x in -2.0f64..2.0,
        ) {
            let f = BasisFamily::fourier();
            let combo: Vec<f64> = c.iter().zip(&d).map(|(ci, di)| a * ci + di).collect();
            let lhs = synthesize(&f, &combo).unwrap().eval(x);
            let rhs = a * synthesize(&f, &c).unwrap().eval(x) + synthesize(&f, &d).unwrap().eval(x);
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn periodic_drift_is_periodic(coeffs in proptest::collection::vec(-2.0f64..2.0, 1..8), i in -2048i64..2048) {
            let x = i as f64 / 512.0;
            let b = synthesize(&BasisFamily::fourier(), &coeffs).unwrap();
            prop_assert_eq!(b.eval(x + 1.0), b.eval(x));
        }
    }
}
