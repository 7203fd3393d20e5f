//! Hierarchical prior over nested truncation levels.
//!
//! ```text
//! j ~ p(j),   s² ~ IG(a, b_rate),   θ | j, s² ~ N(0, s² Ξ_j),
//! b = Σ_{l ≤ m_j} θ_l ψ_l,          Ξ_j = diag(ξ²_1, …, ξ²_{m_j})
//! ```
//!
//! The sampler alternates Gibbs updates of `θ` and `s²` with a
//! reversible-jump move between neighbouring levels. The jump is made
//! conditionally on `s²`: `θ` is integrated out analytically, so the
//! acceptance ratio is a closed-form Bayes factor and, once accepted, `θ`
//! is redrawn from its exact conditional in the new model.

use std::io::Write;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::basis::BasisFamily;
use crate::conjugate::{self, quantile_sorted, spectral_eigenvalue, BandPoint, GaussianPosterior, GaussianPrior};
use crate::error::{invalid, Error, Result};
use crate::likelihood::SufficientStats;
use crate::quadrature::log_integrate_exp;

/// How the coefficient variances `ξ²_l` are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum XiRule {
    /// `ξ²_l = l^(−exponent)`; the default is exponent 2.
    Power {
        exponent: f64,
    },
    Constant {
        value: f64,
    },
    /// `ξ²_l = λ_l` of the spectral prior with the given hyperparameters.
    Spectral {
        eta: f64,
        delta: f64,
        p: u32,
    },
    Explicit {
        values: Vec<f64>,
    },
}

impl Default for XiRule {
    fn default() -> Self {
        XiRule::Power { exponent: 2.0 }
    }
}

/// How the model weights `p(j)` are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum WeightRule {
    /// `p(j) ∝ ratio^j`, truncated at `J_max`; the default ratio is ½.
    Geometric {
        ratio: f64,
    },
    Uniform,
    Explicit {
        values: Vec<f64>,
    },
}

impl Default for WeightRule {
    fn default() -> Self {
        WeightRule::Geometric { ratio: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierPrior {
    family: BasisFamily,
    bounds: Vec<usize>,
    weights: Vec<f64>,
    xi2: Vec<f64>,
    a: f64,
    b_rate: f64,
}

impl HierPrior {
    pub fn new(
        family: BasisFamily,
        j_max: usize,
        weights: &WeightRule,
        xi: &XiRule,
        a: f64,
        b_rate: f64,
    ) -> Result<Self> {
        if j_max == 0 {
            return Err(invalid("j_max", "need at least one model"));
        }
        if let Some(count) = family.level_count() {
            if j_max > count {
                return Err(invalid("j_max", format!("the basis defines only {count} levels")));
            }
        }
        if !(a > 0.0 && a.is_finite()) || !(b_rate > 0.0 && b_rate.is_finite()) {
            return Err(invalid("a", "inverse-gamma shape and rate must be positive"));
        }
        let bounds = (1..=j_max).map(|j| family.level_bound(j)).collect::<Result<Vec<_>>>()?;
        if bounds.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("levels", "level sizes must increase strictly"));
        }
        let m_max = bounds[j_max - 1];
        family.check_count(m_max)?;

        let raw: Vec<f64> = match weights {
            WeightRule::Geometric { ratio } => {
                if !(*ratio > 0.0 && *ratio <= 1.0) {
                    return Err(invalid("weights", "geometric ratio must lie in (0, 1]"));
                }
                (1..=j_max).map(|j| ratio.powi(j as i32)).collect()
            }
            WeightRule::Uniform => vec![1.0; j_max],
            WeightRule::Explicit { values } => {
                if values.len() != j_max {
                    return Err(Error::DimensionMismatch {
                        expected: j_max,
                        got: values.len(),
                    });
                }
                if (values.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(invalid("weights", "model weights must sum to 1"));
                }
                values.clone()
            }
        };
        if raw.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(invalid("weights", "model weights must be positive"));
        }
        let total: f64 = raw.iter().sum();
        let weights = raw.iter().map(|w| w / total).collect();

        let xi2: Vec<f64> = match xi {
            XiRule::Power { exponent } => (1..=m_max).map(|l| (l as f64).powf(-exponent)).collect(),
            XiRule::Constant { value } => vec![*value; m_max],
            XiRule::Spectral { eta, delta, p } => {
                conjugate::spectral_prior(*eta, *delta, *p, 1)?;
                (1..=m_max).map(|l| spectral_eigenvalue(*eta, *delta, *p, l)).collect()
            }
            XiRule::Explicit { values } => {
                if values.len() < m_max {
                    return Err(Error::DimensionMismatch {
                        expected: m_max,
                        got: values.len(),
                    });
                }
                values[..m_max].to_vec()
            }
        };
        if xi2.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("xi", "variances must be positive"));
        }
        if xi2.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid("xi", "variances must be nonincreasing"));
        }
        Ok(Self {
            family,
            bounds,
            weights,
            xi2,
            a,
            b_rate,
        })
    }

    pub fn family(&self) -> &BasisFamily {
        &self.family
    }

    pub fn j_max(&self) -> usize {
        self.bounds.len()
    }

    /// `m_j`, the number of coefficients in model `j` (1-based).
    pub fn m(&self, j: usize) -> usize {
        self.bounds[j - 1]
    }

    pub fn m_max(&self) -> usize {
        *self.bounds.last().expect("at least one level")
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn xi2(&self) -> &[f64] {
        &self.xi2
    }

    pub fn shape(&self) -> f64 {
        self.a
    }

    pub fn rate(&self) -> f64 {
        self.b_rate
    }

    fn check_j(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.j_max() {
            return Err(Error::IndexOutOfRange {
                index: j,
                size: self.j_max(),
            });
        }
        Ok(())
    }

    fn check_stats(&self, stats: &SufficientStats, j: usize) -> Result<()> {
        if stats.m() < self.m(j) {
            return Err(Error::DimensionMismatch {
                expected: self.m(j),
                got: stats.m(),
            });
        }
        Ok(())
    }

    /// Prior covariance `s² Ξ_j`.
    pub fn coefficient_prior(&self, j: usize, s2: f64) -> Result<GaussianPrior> {
        self.check_j(j)?;
        let v: Vec<f64> = self.xi2[..self.m(j)].iter().map(|x| s2 * x).collect();
        GaussianPrior::diagonal(&v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierState {
    pub j: usize,
    pub s2: f64,
    pub theta: DVector<f64>,
}

impl HierState {
    pub fn new(prior: &HierPrior, j: usize, s2: f64, theta: DVector<f64>) -> Result<Self> {
        prior.check_j(j)?;
        if !(s2 > 0.0 && s2.is_finite()) {
            return Err(invalid("s2", format!("scale must be positive, got {s2}")));
        }
        if theta.len() != prior.m(j) {
            return Err(Error::DimensionMismatch {
                expected: prior.m(j),
                got: theta.len(),
            });
        }
        Ok(Self { j, s2, theta })
    }

    /// Model 1 at the inverse-gamma mode with zero coefficients.
    pub fn initial(prior: &HierPrior) -> Self {
        Self {
            j: 1,
            s2: prior.b_rate / (prior.a + 1.0),
            theta: DVector::zeros(prior.m(1)),
        }
    }

    /// Coefficients padded with zeros to length `m`.
    pub fn padded(&self, m: usize) -> Vec<f64> {
        let mut c = vec![0.0; m];
        c[..self.theta.len()].copy_from_slice(self.theta.as_slice());
        c
    }
}

/// Exact draw of `(j, s², θ)` from the prior.
pub fn sample_prior<R: Rng + ?Sized>(prior: &HierPrior, rng: &mut R) -> HierState {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut j = prior.j_max();
    for (i, w) in prior.weights.iter().enumerate() {
        acc += w;
        if u < acc {
            j = i + 1;
            break;
        }
    }
    let s2 = inverse_gamma(prior.a, prior.b_rate, rng);
    let theta = DVector::from_fn(prior.m(j), |l, _| {
        (s2 * prior.xi2[l]).sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    HierState { j, s2, theta }
}

fn inverse_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / rate).expect("positive shape and rate");
    1.0 / g.sample(rng)
}

/// Log density of `IG(a, b)` at `s2`.
pub fn inverse_gamma_ln_pdf(a: f64, b: f64, s2: f64) -> f64 {
    a * b.ln() - ln_gamma(a) - (a + 1.0) * s2.ln() - b / s2
}

/// Conditional posterior of `θ` in model `j` given `s²`.
pub fn theta_conditional(j: usize, s2: f64, stats: &SufficientStats, prior: &HierPrior) -> Result<GaussianPosterior> {
    prior.check_j(j)?;
    prior.check_stats(stats, j)?;
    conjugate::posterior(&stats.leading(prior.m(j))?, &prior.coefficient_prior(j, s2)?)
}

pub fn gibbs_theta<R: Rng + ?Sized>(
    state: &HierState,
    stats: &SufficientStats,
    prior: &HierPrior,
    rng: &mut R,
) -> Result<DVector<f64>> {
    Ok(theta_conditional(state.j, state.s2, stats, prior)?.sample(rng))
}

/// Draw from `IG(a + m_j/2, b_rate + ½ θᵀΞ_j⁻¹θ)`.
pub fn gibbs_s2<R: Rng + ?Sized>(state: &HierState, prior: &HierPrior, rng: &mut R) -> f64 {
    let quad: f64 = state.theta.iter().zip(&prior.xi2).map(|(t, x)| t * t / x).sum();
    inverse_gamma(prior.a + 0.5 * state.theta.len() as f64, prior.b_rate + 0.5 * quad, rng)
}

/// `log ∫ exp(θᵀμ_j − ½θᵀΣ_jθ) dN(θ; 0, s²Ξ_j)`:
///
/// ```text
/// −½ log det(s²Ξ_j) − ½ log det A + ½ μ_jᵀ A⁻¹ μ_j,   A = Σ_j + (s²Ξ_j)⁻¹
/// ```
pub fn log_conditional_evidence(j: usize, s2: f64, stats: &SufficientStats, prior: &HierPrior) -> Result<f64> {
    prior.check_j(j)?;
    prior.check_stats(stats, j)?;
    let m = prior.m(j);
    Ok(evidence_block(
        &stats.mu.rows(0, m).into_owned(),
        &stats.sigma.view((0, 0), (m, m)).into_owned(),
        &prior.xi2[..m],
        s2,
    ))
}

fn evidence_block(mu: &DVector<f64>, sigma: &DMatrix<f64>, xi2: &[f64], s2: f64) -> f64 {
    let mut a = sigma.clone();
    let mut log_det_v = 0.0;
    for (l, x) in xi2.iter().enumerate() {
        let v = s2 * x;
        log_det_v += v.ln();
        a[(l, l)] += 1.0 / v;
    }
    let Some(chol) = Cholesky::new(a) else {
        return f64::NEG_INFINITY;
    };
    let log_det_a: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let sol = chol.solve(mu);
    -0.5 * (log_det_v + log_det_a) + 0.5 * mu.dot(&sol)
}

/// `log p(X | j)`: the conditional evidence integrated against `IG(a, b_rate)`
/// in `u = log s²` by adaptive quadrature (relative tolerance 1e-8).
pub fn log_model_marginal(j: usize, stats: &SufficientStats, prior: &HierPrior) -> Result<f64> {
    prior.check_j(j)?;
    prior.check_stats(stats, j)?;
    let m = prior.m(j);
    let mu = stats.mu.rows(0, m).into_owned();
    let sigma = stats.sigma.view((0, 0), (m, m)).into_owned();
    let xi2 = &prior.xi2[..m];
    let (a, b) = (prior.a, prior.b_rate);
    let log_norm = a * b.ln() - ln_gamma(a);
    // density of u = log s² under IG(a, b): b^a/Γ(a) · e^{−a u} · e^{−b e^{−u}}
    let h = |u: f64| evidence_block(&mu, &sigma, xi2, u.exp()) + log_norm - a * u - b * (-u).exp();
    let center = (b / a).ln();
    let lo = center - 40.0 - 10.0 / a.sqrt();
    let hi = center + 60.0 / a.min(1.0);
    log_integrate_exp(h, lo, hi, center, 1.0 / a.sqrt(), 1e-8).map_err(|e| match e {
        Error::Quadrature(msg) => Error::Quadrature(format!("model {j}: {msg}")),
        other => other,
    })
}

/// Posterior model probabilities `p(j | X)` for `j = 1..J_max`.
pub fn model_posterior(stats: &SufficientStats, prior: &HierPrior) -> Result<Vec<f64>> {
    let logs = (1..=prior.j_max())
        .map(|j| Ok(prior.weights[j - 1].ln() + log_model_marginal(j, stats, prior)?))
        .collect::<Result<Vec<f64>>>()?;
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.iter().map(|v| v / total).collect())
}

/// Probability of proposing `to` from `from` under nearest-neighbour moves
/// reflected at `1` and `J_max`.
fn proposal_prob(from: usize, to: usize, j_max: usize) -> f64 {
    if from == 1 || from == j_max {
        1.0
    } else {
        let _ = to;
        0.5
    }
}

/// Log acceptance ratio of the jump `j → j'` at fixed `s²`.
pub fn log_jump_ratio(j: usize, j_new: usize, s2: f64, stats: &SufficientStats, prior: &HierPrior) -> Result<f64> {
    let jm = prior.j_max();
    Ok(
        prior.weights[j_new - 1].ln() - prior.weights[j - 1].ln() + log_conditional_evidence(j_new, s2, stats, prior)?
            - log_conditional_evidence(j, s2, stats, prior)?
            + proposal_prob(j_new, j, jm).ln()
            - proposal_prob(j, j_new, jm).ln(),
    )
}

/// Outcome of one reversible-jump proposal.
#[derive(Debug, Clone)]
pub struct JumpOutcome {
    pub state: HierState,
    pub proposed: usize,
    pub accepted: bool,
}

pub fn rj_step<R: Rng + ?Sized>(
    state: &HierState,
    stats: &SufficientStats,
    prior: &HierPrior,
    rng: &mut R,
) -> Result<JumpOutcome> {
    let jm = prior.j_max();
    if jm == 1 {
        return Ok(JumpOutcome {
            state: state.clone(),
            proposed: 1,
            accepted: false,
        });
    }
    let j_new = if state.j == 1 {
        2
    } else if state.j == jm {
        jm - 1
    } else if rng.random::<bool>() {
        state.j + 1
    } else {
        state.j - 1
    };
    let log_alpha = log_jump_ratio(state.j, j_new, state.s2, stats, prior)?;
    let accepted = log_alpha >= 0.0 || rng.random::<f64>().ln() < log_alpha;
    let state = if accepted {
        let theta = theta_conditional(j_new, state.s2, stats, prior)?.sample(rng);
        HierState {
            j: j_new,
            s2: state.s2,
            theta,
        }
    } else {
        state.clone()
    };
    Ok(JumpOutcome {
        state,
        proposed: j_new,
        accepted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOrder {
    #[default]
    ThetaFirst,
    ScaleFirst,
}

/// One full sweep: the model jump, then `θ` and `s²` in the given order.
pub fn sweep<R: Rng + ?Sized>(
    state: &HierState,
    stats: &SufficientStats,
    prior: &HierPrior,
    order: SweepOrder,
    rng: &mut R,
) -> Result<(HierState, bool)> {
    let jump = rj_step(state, stats, prior, rng)?;
    let mut s = jump.state;
    match order {
        SweepOrder::ThetaFirst => {
            s.theta = gibbs_theta(&s, stats, prior, rng)?;
            s.s2 = gibbs_s2(&s, prior, rng);
        }
        SweepOrder::ScaleFirst => {
            s.s2 = gibbs_s2(&s, prior, rng);
            s.theta = gibbs_theta(&s, stats, prior, rng)?;
        }
    }
    Ok((s, jump.accepted))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thinning: usize,
    #[serde(default)]
    pub order: SweepOrder,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_iter <= self.burn_in {
            return Err(invalid("n_iter", "must exceed burn_in"));
        }
        if self.thinning == 0 {
            return Err(invalid("thinning", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    pub iter: usize,
    pub j: usize,
    pub s2: f64,
    pub theta: Vec<f64>,
    pub loglik: f64,
}

#[derive(Debug, Clone)]
pub struct Chain {
    pub records: Vec<ChainRecord>,
    pub x_grid: Vec<f64>,
    /// Drift evaluations on `x_grid`, one row per record.
    pub drift: Vec<Vec<f64>>,
    pub jump_acceptance: f64,
}

/// Log-likelihood `θᵀμ_j − ½θᵀΣ_jθ` of a state.
pub fn state_loglik(state: &HierState, stats: &SufficientStats) -> f64 {
    let m = state.theta.len();
    let sigma = stats.sigma.view((0, 0), (m, m));
    state.theta.dot(&stats.mu.rows(0, m)) - 0.5 * (sigma * &state.theta).dot(&state.theta)
}

/// Evaluates `Σ θ_l ψ_l` on a grid.
pub fn evaluate_on_grid(family: &BasisFamily, theta: &[f64], xs: &[f64]) -> Vec<f64> {
    let mut psi = vec![0.0; theta.len()];
    xs.iter()
        .map(|&x| {
            family.fill_values(x, &mut psi);
            psi.iter().zip(theta).map(|(p, t)| p * t).sum()
        })
        .collect()
}

pub fn run_chain<R: Rng + ?Sized>(
    stats: &SufficientStats,
    prior: &HierPrior,
    config: &ChainConfig,
    x_grid: &[f64],
    init: Option<HierState>,
    rng: &mut R,
) -> Result<Chain> {
    config.validate()?;
    prior.check_stats(stats, prior.j_max())?;
    let mut state = init.unwrap_or_else(|| HierState::initial(prior));
    let mut records = Vec::new();
    let mut drift = Vec::new();
    let mut accepted = 0usize;
    for iter in 0..config.n_iter {
        let (next, acc) = sweep(&state, stats, prior, config.order, rng)?;
        state = next;
        accepted += acc as usize;
        if iter >= config.burn_in && (iter - config.burn_in).is_multiple_of(config.thinning) {
            if !x_grid.is_empty() {
                drift.push(evaluate_on_grid(&prior.family, state.theta.as_slice(), x_grid));
            }
            records.push(ChainRecord {
                iter,
                j: state.j,
                s2: state.s2,
                theta: state.theta.iter().copied().collect(),
                loglik: state_loglik(&state, stats),
            });
        }
    }
    Ok(Chain {
        records,
        x_grid: x_grid.to_vec(),
        drift,
        jump_acceptance: accepted as f64 / config.n_iter as f64,
    })
}

impl Chain {
    pub fn s2_trace(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.s2).collect()
    }

    pub fn loglik_trace(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loglik).collect()
    }

    pub fn j_trace(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.j as f64).collect()
    }

    /// Fraction of retained iterations spent in each model.
    pub fn model_frequencies(&self, j_max: usize) -> Vec<f64> {
        let mut f = vec![0.0; j_max];
        for r in &self.records {
            f[r.j - 1] += 1.0;
        }
        let n = self.records.len() as f64;
        f.iter_mut().for_each(|v| *v /= n);
        f
    }

    /// Pointwise posterior mean and equal-tailed credible band of the drift.
    pub fn bands(&self, level: f64) -> Result<Vec<BandPoint>> {
        if !(level > 0.0 && level < 1.0) {
            return Err(invalid("level", "credible level must lie in (0, 1)"));
        }
        if self.drift.is_empty() {
            return Err(invalid("x_grid", "chain holds no drift evaluations"));
        }
        Ok(self
            .x_grid
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let mut col: Vec<f64> = self.drift.iter().map(|row| row[i]).collect();
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                col.sort_by(f64::total_cmp);
                BandPoint {
                    x,
                    mean,
                    lower: quantile_sorted(&col, 0.5 - 0.5 * level),
                    upper: quantile_sorted(&col, 0.5 + 0.5 * level),
                }
            })
            .collect())
    }

    /// Drift evaluations at grid point `i` across retained iterations.
    pub fn drift_trace(&self, i: usize) -> Vec<f64> {
        self.drift.iter().map(|row| row[i]).collect()
    }

    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iter,j,s2,loglik")?;
        for r in &self.records {
            writeln!(w, "{},{},{},{}", r.iter, r.j, r.s2, r.loglik)?;
        }
        Ok(())
    }

    /// Wide CSV: header `iter,<x_1>,…,<x_n>`, one row per retained iteration.
    pub fn write_drift_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "iter")?;
        for x in &self.x_grid {
            write!(w, ",{x}")?;
        }
        writeln!(w)?;
        for (r, row) in self.records.iter().zip(&self.drift) {
            write!(w, "{}", r.iter)?;
            for v in row {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}
