//! Run configuration: one JSON document per run, `//` and `#` line comments
//! allowed. Every field is checked when the file is loaded.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augmentation::AugConfig;
use crate::basis::{synthesize, BasisFamily, Drift, DriftSpec};
use crate::conjugate::{spectral_prior, spectral_truncation, GaussianPrior};
use crate::error::{invalid, Error, Result};
use crate::hierarchical::{ChainConfig, HierPrior, SweepOrder, WeightRule, XiRule};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub infer: Option<InferConfig>,
    #[serde(default)]
    pub contract: Option<ContractConfig>,
}

/// A drift given in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftConfig {
    Zero,
    Constant {
        value: f64,
    },
    /// `Σ coeffs[i] x^i`.
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// `Σ coeffs[k] ψ_{k+1}` in a named basis family.
    Basis {
        #[serde(default = "default_basis")]
        basis: String,
        coeffs: Vec<f64>,
    },
}

/// A [`DriftConfig`] ready for evaluation.
#[derive(Debug, Clone)]
pub enum BuiltDrift {
    Constant(f64),
    Polynomial(Vec<f64>),
    Basis(DriftSpec),
}

impl Drift for BuiltDrift {
    fn eval(&self, x: f64) -> f64 {
        match self {
            BuiltDrift::Constant(c) => *c,
            BuiltDrift::Polynomial(c) => c.iter().rev().fold(0.0, |acc, a| acc * x + a),
            BuiltDrift::Basis(spec) => spec.eval(x),
        }
    }
}

impl DriftConfig {
    pub fn build(&self) -> Result<BuiltDrift> {
        let finite = |v: &[f64]| v.iter().all(|c| c.is_finite());
        match self {
            DriftConfig::Zero => Ok(BuiltDrift::Constant(0.0)),
            DriftConfig::Constant { value } if value.is_finite() => Ok(BuiltDrift::Constant(*value)),
            DriftConfig::Polynomial { coeffs } if finite(coeffs) => Ok(BuiltDrift::Polynomial(coeffs.clone())),
            DriftConfig::Basis { basis, coeffs } if finite(coeffs) => {
                Ok(BuiltDrift::Basis(synthesize(&BasisFamily::parse(basis)?, coeffs)?))
            }
            _ => Err(invalid("drift", "drift coefficients must be finite")),
        }
    }
}

fn default_basis() -> String {
    "fourier".into()
}
fn default_level() -> f64 {
    0.95
}
fn default_grid() -> usize {
    200
}
fn default_cells() -> usize {
    256
}
fn default_p() -> u32 {
    2
}
fn default_ratio() -> f64 {
    1e-8
}
fn default_one() -> usize {
    1
}
fn default_replicates() -> usize {
    10
}
fn default_dt() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub drift: DriftConfig,
    #[serde(default)]
    pub x0: f64,
    pub horizon: f64,
    pub n_steps: usize,
    /// Observation spacing in grid steps; no observation file if absent.
    #[serde(default)]
    pub obs_stride: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Dense-grid path CSV (`t,x`).
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Low-frequency observation CSV (`# delta=…`, `k,x`).
    #[serde(default)]
    pub observations: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorConfig {
    /// Precision operator `η((−Δ)^p + κI)` in the Fourier basis.
    Spectral {
        eta: f64,
        #[serde(default)]
        delta: f64,
        #[serde(default = "default_p")]
        p: u32,
        /// Truncation; by default the smallest even `m` with
        /// `λ_m/λ_1 < truncation_ratio`.
        #[serde(default)]
        m: Option<usize>,
        #[serde(default = "default_ratio")]
        truncation_ratio: f64,
    },
    /// Independent Gaussian coefficients: either one `variance` for `m`
    /// functions (all functions of a finite family if `m` is absent) or an
    /// explicit `variances` list.
    Gaussian {
        #[serde(default)]
        variance: Option<f64>,
        #[serde(default)]
        variances: Option<Vec<f64>>,
        #[serde(default)]
        m: Option<usize>,
    },
    Hierarchical {
        j_max: usize,
        a: f64,
        b_rate: f64,
        #[serde(default)]
        xi: XiRule,
        #[serde(default)]
        weights: WeightRule,
        /// Level sizes `m_1 < m_2 < …`; family default if absent.
        #[serde(default)]
        levels: Option<Vec<usize>>,
    },
}

/// A prior ready to use.
#[derive(Debug, Clone)]
pub enum BuiltPrior {
    Conjugate(GaussianPrior),
    Hierarchical(HierPrior),
}

impl PriorConfig {
    pub fn build(&self, family: &BasisFamily) -> Result<BuiltPrior> {
        match self {
            PriorConfig::Spectral {
                eta,
                delta,
                p,
                m,
                truncation_ratio,
            } => {
                if !family.is_periodic() || family.size().is_some() {
                    return Err(Error::UnsupportedFamily(format!(
                        "the spectral prior is defined on the Fourier basis, not `{family}`"
                    )));
                }
                let m = match m {
                    Some(m) => *m,
                    None => spectral_truncation(*eta, *delta, *p, *truncation_ratio)?,
                };
                Ok(BuiltPrior::Conjugate(spectral_prior(*eta, *delta, *p, m)?))
            }
            PriorConfig::Gaussian { variance, variances, m } => {
                let v = match (variance, variances) {
                    (Some(v), None) => {
                        let m = m
                            .or(family.size())
                            .ok_or_else(|| invalid("m", "needed for an infinite family"))?;
                        vec![*v; m]
                    }
                    (None, Some(vs)) => vs.clone(),
                    _ => return Err(invalid("prior", "give exactly one of `variance` and `variances`")),
                };
                family.check_count(v.len())?;
                Ok(BuiltPrior::Conjugate(GaussianPrior::diagonal(&v)?))
            }
            PriorConfig::Hierarchical {
                j_max,
                a,
                b_rate,
                xi,
                weights,
                levels,
            } => {
                let family = match levels {
                    Some(l) => family.clone().with_levels(l.clone())?,
                    None => family.clone(),
                };
                Ok(BuiltPrior::Hierarchical(HierPrior::new(
                    family, *j_max, weights, xi, *a, *b_rate,
                )?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSettings {
    pub n_iter: usize,
    pub burn_in: usize,
    #[serde(default = "default_one")]
    pub thinning: usize,
    #[serde(default)]
    pub order: SweepOrder,
}

impl Default for ChainSettings {
    fn default() -> Self {
        Self {
            n_iter: 20_000,
            burn_in: 2_000,
            thinning: 1,
            order: SweepOrder::ThetaFirst,
        }
    }
}

impl ChainSettings {
    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            n_iter: self.n_iter,
            burn_in: self.burn_in,
            thinning: self.thinning,
            order: self.order,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugSettings {
    pub inner_steps: usize,
    pub mh_sweeps: usize,
}

impl Default for AugSettings {
    fn default() -> Self {
        let d = AugConfig::default();
        Self {
            inner_steps: d.inner_steps,
            mh_sweeps: d.mh_sweeps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferConfig {
    pub data: DataConfig,
    #[serde(default = "default_basis")]
    pub basis: String,
    pub prior: PriorConfig,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Points of the output grid over the basis domain.
    #[serde(default = "default_grid")]
    pub grid_points: usize,
    /// Cells of the occupation-field output (periodic families only).
    #[serde(default = "default_cells")]
    pub occupation_cells: usize,
    #[serde(default)]
    pub chain: ChainSettings,
    #[serde(default)]
    pub augmentation: AugSettings,
    /// Known drift of synthetic data, used for error reporting and plots.
    #[serde(default)]
    pub true_drift: Option<DriftConfig>,
}

impl InferConfig {
    pub fn family(&self) -> Result<BasisFamily> {
        BasisFamily::parse(&self.basis)
    }

    pub fn aug_config(&self) -> AugConfig {
        AugConfig {
            inner_steps: self.augmentation.inner_steps,
            mh_sweeps: self.augmentation.mh_sweeps,
            n_iter: self.chain.n_iter,
            burn_in: self.chain.burn_in,
            thinning: self.chain.thinning,
        }
    }

    /// Output grid: `grid_points` midpoints of the family's domain.
    pub fn x_grid(&self) -> Result<Vec<f64>> {
        let (lo, hi) = self.family()?.domain();
        let n = self.grid_points;
        Ok((0..n).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractConfig {
    pub drift: DriftConfig,
    pub horizons: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub x0: f64,
    #[serde(default = "default_basis")]
    pub basis: String,
    pub prior: PriorConfig,
    /// Midpoints used for the L² error over `[0, 1]`.
    #[serde(default = "default_error_grid")]
    pub error_grid: usize,
}

fn default_error_grid() -> usize {
    1000
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(name, format!("must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    /// Parses and validates a configuration document.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(&strip_comments(text)).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.simulate {
            s.drift.build()?;
            positive("horizon", s.horizon)?;
            if s.n_steps == 0 {
                return Err(invalid("n_steps", "must be at least 1"));
            }
            if !s.x0.is_finite() {
                return Err(invalid("x0", "must be finite"));
            }
            if let Some(k) = s.obs_stride {
                if k == 0 || s.n_steps % k != 0 {
                    return Err(invalid("obs_stride", "must divide n_steps"));
                }
            }
        }
        if let Some(i) = &self.infer {
            match (&i.data.path, &i.data.observations) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => return Err(invalid("data", "give exactly one of `path` and `observations`")),
            }
            let family = i.family()?;
            i.prior.build(&family)?;
            if !(i.level > 0.0 && i.level < 1.0) {
                return Err(invalid("level", "credible level must lie in (0, 1)"));
            }
            if i.grid_points < 2 || i.occupation_cells < 2 {
                return Err(invalid("grid_points", "grids need at least 2 points"));
            }
            if matches!(i.prior, PriorConfig::Hierarchical { .. }) || i.data.observations.is_some() {
                i.chain.chain_config().validate()?;
            }
            if i.data.observations.is_some() {
                i.aug_config().validate()?;
            }
            if let Some(d) = &i.true_drift {
                d.build()?;
            }
        }
        if let Some(c) = &self.contract {
            c.drift.build()?;
            if c.horizons.is_empty() {
                return Err(invalid("horizons", "need at least one horizon"));
            }
            for t in &c.horizons {
                positive("horizons", *t)?;
            }
            if c.horizons.windows(2).any(|w| w[1] <= w[0]) {
                return Err(invalid("horizons", "horizons must increase strictly"));
            }
            positive("dt", c.dt)?;
            if c.replicates == 0 || c.error_grid < 2 {
                return Err(invalid(
                    "replicates",
                    "need at least one replicate and two error-grid points",
                ));
            }
            if let BuiltPrior::Hierarchical(_) = c.prior.build(&BasisFamily::parse(&c.basis)?)? {
                return Err(invalid("prior", "the contraction experiment uses a conjugate prior"));
            }
        }
        Ok(())
    }
}

/// Removes `//` and `#` comments that start outside string literals.
pub fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.lines() {
        let mut in_string = false;
        let mut escaped = false;
        let mut cut = line.len();
        let bytes = line.as_bytes();
        for (i, &c) in bytes.iter().enumerate() {
            if in_string {
                match c {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_string = false,
                    _ => {}
                }
                continue;
            }
            match c {
                b'"' => in_string = true,
                b'#' => {
                    cut = i;
                    break;
                }
                b'/' if bytes.get(i + 1) == Some(&b'/') => {
                    cut = i;
                    break;
                }
                _ => {}
            }
        }
        out.push_str(&line[..cut]);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const COMMENTED: &str = r#"
    // a commented config
    {
      "seed": 7,  # trailing comment
      "simulate": {
        "drift": { "kind": "polynomial", "coeffs": [0, 0.5, 0, -0.5] },
        "horizon": 10, "n_steps": 1000, "obs_stride": 100
      },
      "infer": {
        "data": { "path": "path.csv" },
        "basis": "indicator interval=-2..2 cells=20",
        "prior": { "kind": "gaussian", "variance": 1.0 },
        "grid_points": 100
      }
    }"#;

    #[test]
    fn parses_commented_config() {
        let cfg = RunConfig::parse(COMMENTED).unwrap();
        assert_eq!(cfg.seed, Some(7));
        let inf = cfg.infer.unwrap();
        assert_eq!(inf.level, 0.95);
        match inf.prior.build(&inf.family().unwrap()).unwrap() {
            BuiltPrior::Conjugate(p) => assert_eq!(p.m(), 20),
            _ => panic!(),
        }
        let grid = inf.x_grid().unwrap();
        assert!((grid[0] + 1.98).abs() < 1e-12);
    }

    #[test]
    fn comment_markers_inside_strings_survive() {
        assert_eq!(strip_comments(r#"{"a": "x//y#z"} // c"#).trim(), r#"{"a": "x//y#z"}"#);
        assert_eq!(strip_comments(r##"{"a": "q\"#"} # c"##).trim(), r##"{"a": "q\"#"}"##);
    }

    #[test]
    fn invalid_values_are_rejected_at_parse_time() {
        let bad = [
            r#"{"simulate": {"drift": {"kind": "zero"}, "horizon": -1, "n_steps": 10}}"#,
            r#"{"simulate": {"drift": {"kind": "zero"}, "horizon": 1, "n_steps": 10, "obs_stride": 3}}"#,
            r#"{"infer": {"data": {"path": "a"}, "prior": {"kind": "spectral", "eta": 0.02, "delta": -1}}}"#,
            r#"{"infer": {"data": {}, "prior": {"kind": "spectral", "eta": 0.02}}}"#,
            r#"{"infer": {"data": {"path": "a"}, "prior": {"kind": "spectral", "eta": 0.02}, "level": 1.5}}"#,
            r#"{"infer": {"data": {"path": "a"}, "basis": "indicator interval=0..1 cells=4", "prior": {"kind": "spectral", "eta": 1}}}"#,
            r#"{"contract": {"drift": {"kind": "zero"}, "horizons": [400, 100], "prior": {"kind": "spectral", "eta": 1}}}"#,
            r#"{"seed": 1, "unknown": 2}"#,
        ];
        for b in bad {
            assert!(RunConfig::parse(b).is_err(), "accepted: {b}");
        }
    }

    #[test]
    fn drift_configs_evaluate() {
        let p = DriftConfig::Polynomial {
            coeffs: vec![0.0, 0.5, 0.0, -0.5],
        }
        .build()
        .unwrap();
        for x in [-1.5, 0.3, 2.0] {
            assert!((p.eval(x) + 0.5 * x * (x - 1.0) * (x + 1.0)).abs() < 1e-14);
        }
        let f = DriftConfig::Basis {
            basis: "fourier".into(),
            coeffs: vec![1.0],
        }
        .build()
        .unwrap();
        assert!((f.eval(0.25) - 2f64.sqrt()).abs() < 1e-14);
    }
}
