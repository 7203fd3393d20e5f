//! Data augmentation for low-frequency observations.
//!
//! The unobserved path between consecutive observations is latent. Given the
//! drift, each segment is updated by independence Metropolis–Hastings with
//! Brownian-bridge proposals pinned at the observations; the proposal is
//! accepted with probability `min(1, exp(w(proposal) − w(current)))`, where
//! `w` is the discretized Girsanov exponent of the segment. Given the
//! imputed path, the drift is drawn from its full-data conditional. The two
//! steps alternate.
//!
//! Every segment draws from its own stream keyed by (iteration, segment), so
//! the result does not depend on the order in which segments are visited.

use std::io::Write;

use nalgebra::DVector;
use rand::Rng;

use crate::basis::{synthesize, BasisFamily, Drift};
use crate::conjugate::{posterior, quantile_sorted, BandPoint, GaussianPrior};
use crate::error::{invalid, Error, Result};
use crate::hierarchical::{self, evaluate_on_grid, HierPrior, HierState, SweepOrder};
use crate::likelihood::{sufficient_statistics, SufficientStats};
use crate::path::{fill_bridge_interior, ObservationSet, SamplePath};
use crate::rng::{pair_key, Domain, SeedStream};

/// Discretized Girsanov exponent `Σ b(x_k)(x_{k+1} − x_k) − ½ Σ b(x_k)² dt`.
pub fn segment_log_weight<D: Drift + ?Sized>(segment: &SamplePath, drift: &D) -> f64 {
    weight(segment.values(), segment.dt(), drift)
}

fn weight<D: Drift + ?Sized>(xs: &[f64], dt: f64, drift: &D) -> f64 {
    let mut ito = 0.0;
    let mut energy = 0.0;
    for w in xs.windows(2) {
        let b = drift.eval(w[0]);
        ito += b * (w[1] - w[0]);
        energy += b * b;
    }
    ito - 0.5 * energy * dt
}

/// `min(1, exp(w_proposal − w_current))`; a non-finite proposal weight is
/// never accepted.
pub fn acceptance_probability(w_current: f64, w_proposal: f64) -> f64 {
    if !w_proposal.is_finite() {
        return 0.0;
    }
    if !w_current.is_finite() {
        return 1.0;
    }
    (w_proposal - w_current).exp().min(1.0)
}

/// `sweeps` independence MH steps on one segment in place; returns the
/// number of accepted proposals.
fn mh_segment<D: Drift + ?Sized, R: Rng + ?Sized>(
    xs: &mut [f64],
    dt: f64,
    drift: &D,
    sweeps: usize,
    rng: &mut R,
    scratch: &mut Vec<f64>,
) -> usize {
    let n_steps = xs.len() - 1;
    let (start, end) = (xs[0], xs[n_steps]);
    let mut current = weight(xs, dt, drift);
    let mut accepted = 0;
    for _ in 0..sweeps {
        scratch.clear();
        scratch.push(start);
        fill_bridge_interior(start, end, dt, n_steps, rng, scratch);
        scratch.push(end);
        let proposed = weight(scratch, dt, drift);
        let alpha = acceptance_probability(current, proposed);
        if alpha >= 1.0 || rng.random::<f64>() < alpha {
            xs[1..n_steps].copy_from_slice(&scratch[1..n_steps]);
            current = proposed;
            accepted += 1;
        }
    }
    accepted
}

/// One MH update of a single segment; endpoints are left untouched.
pub fn bridge_mh_update<D: Drift + ?Sized, R: Rng + ?Sized>(
    segment: &SamplePath,
    drift: &D,
    rng: &mut R,
) -> (SamplePath, bool) {
    let mut out = segment.clone();
    let mut scratch = Vec::with_capacity(segment.len());
    let acc = mh_segment(out.values_mut(), segment.dt(), drift, 1, rng, &mut scratch);
    (out, acc == 1)
}

/// Observations together with the imputed fine path through them.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedState {
    obs: ObservationSet,
    inner_steps: usize,
    path: SamplePath,
}

impl AugmentedState {
    /// Fills every segment with an independent Brownian bridge, drawn from
    /// the streams of iteration `key`.
    pub fn from_bridges(obs: &ObservationSet, inner_steps: usize, stream: &SeedStream, key: u64) -> Result<Self> {
        if inner_steps == 0 {
            return Err(invalid("inner_steps", "need at least one step per segment"));
        }
        let n = obs.n_intervals();
        let dt = obs.delta() / inner_steps as f64;
        let mut values = Vec::with_capacity(n * inner_steps + 1);
        let ys = obs.values();
        values.push(ys[0]);
        for i in 0..n {
            let mut rng = stream.rng(Domain::Bridge, pair_key(key, i as u64));
            fill_bridge_interior(ys[i], ys[i + 1], dt, inner_steps, &mut rng, &mut values);
            values.push(ys[i + 1]);
        }
        Ok(Self {
            obs: obs.clone(),
            inner_steps,
            path: SamplePath::new(0.0, dt, values)?,
        })
    }

    pub fn observations(&self) -> &ObservationSet {
        &self.obs
    }

    pub fn inner_steps(&self) -> usize {
        self.inner_steps
    }

    pub fn n_segments(&self) -> usize {
        self.obs.n_intervals()
    }

    /// The glued path on `[0, nΔ]`.
    pub fn path(&self) -> &SamplePath {
        &self.path
    }

    pub fn segment(&self, i: usize) -> SamplePath {
        let k = self.inner_steps;
        let values = self.path.values()[i * k..=(i + 1) * k].to_vec();
        SamplePath::new(i as f64 * self.obs.delta(), self.path.dt(), values).expect("segment of a valid path")
    }

    /// True if the path passes through every observation bit-exactly.
    pub fn pinned(&self) -> bool {
        let xs = self.path.values();
        self.obs
            .values()
            .iter()
            .enumerate()
            .all(|(i, y)| xs[i * self.inner_steps].to_bits() == y.to_bits())
    }

    /// `sweeps` MH updates of every segment with the streams of iteration
    /// `key`, visiting segments in `order` (all, ascending, if `None`).
    /// Returns the acceptance rate of each segment.
    pub fn update<D: Drift + ?Sized>(
        &mut self,
        drift: &D,
        sweeps: usize,
        stream: &SeedStream,
        key: u64,
        order: Option<&[usize]>,
    ) -> Result<Vec<f64>> {
        let n = self.n_segments();
        let k = self.inner_steps;
        if k == 1 {
            return Ok(vec![1.0; n]);
        }
        if sweeps == 0 {
            return Err(invalid("mh_sweeps", "need at least one MH sweep"));
        }
        let dt = self.path.dt();
        let default: Vec<usize> = (0..n).collect();
        let order = order.unwrap_or(&default);
        let mut rates = vec![0.0; n];
        let mut scratch = Vec::with_capacity(k + 1);
        let xs = self.path.values_mut();
        for &i in order {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, size: n });
            }
            let mut rng = stream.rng(Domain::Bridge, pair_key(key, i as u64));
            let acc = mh_segment(&mut xs[i * k..=(i + 1) * k], dt, drift, sweeps, &mut rng, &mut scratch);
            rates[i] = acc as f64 / sweeps as f64;
        }
        Ok(rates)
    }
}

/// Fresh bridges followed by one MH update per segment.
pub fn impute_full_path<D: Drift + ?Sized>(
    obs: &ObservationSet,
    drift: &D,
    inner_steps: usize,
    stream: &SeedStream,
    key: u64,
) -> Result<(AugmentedState, Vec<f64>)> {
    let mut state = AugmentedState::from_bridges(obs, inner_steps, stream, key)?;
    let rates = state.update(drift, 1, stream, key.wrapping_add(1 << 31), None)?;
    Ok((state, rates))
}

/// The drift model updated from the imputed path.
#[derive(Debug, Clone)]
pub enum DriftModel {
    /// Fixed Gaussian prior on `ψ_1, …, ψ_m`, `m` being the prior dimension.
    Conjugate {
        family: BasisFamily,
        prior: GaussianPrior,
    },
    Hierarchical {
        prior: HierPrior,
        order: SweepOrder,
    },
}

impl DriftModel {
    pub fn family(&self) -> &BasisFamily {
        match self {
            DriftModel::Conjugate { family, .. } => family,
            DriftModel::Hierarchical { prior, .. } => prior.family(),
        }
    }

    /// Number of statistics the drift update needs.
    pub fn m(&self) -> usize {
        match self {
            DriftModel::Conjugate { prior, .. } => prior.m(),
            DriftModel::Hierarchical { prior, .. } => prior.m_max(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugConfig {
    pub inner_steps: usize,
    pub mh_sweeps: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    pub thinning: usize,
}

impl Default for AugConfig {
    fn default() -> Self {
        Self {
            inner_steps: 64,
            mh_sweeps: 5,
            n_iter: 2000,
            burn_in: 200,
            thinning: 1,
        }
    }
}

impl AugConfig {
    pub fn validate(&self) -> Result<()> {
        if self.inner_steps == 0 {
            return Err(invalid("inner_steps", "must be at least 1"));
        }
        if self.mh_sweeps == 0 {
            return Err(invalid("mh_sweeps", "must be at least 1"));
        }
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
pub struct AugRecord {
    pub iter: usize,
    pub j: usize,
    pub s2: f64,
    pub theta: Vec<f64>,
    pub loglik: f64,
    /// MH acceptance rate of each segment in this iteration.
    pub acceptance: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AugChain {
    pub records: Vec<AugRecord>,
    pub x_grid: Vec<f64>,
    pub drift: Vec<Vec<f64>>,
    /// Per-segment acceptance rate over all iterations, burn-in included.
    pub segment_acceptance: Vec<f64>,
    /// The imputed path after the last iteration.
    pub last: AugmentedState,
}

/// Alternates imputation of the latent path and a drift update.
///
/// The conjugate model records `j = 1` and the fixed scale `s² = 1`.
pub fn run_augmented_gibbs(
    obs: &ObservationSet,
    model: &DriftModel,
    config: &AugConfig,
    x_grid: &[f64],
    stream: &SeedStream,
) -> Result<AugChain> {
    config.validate()?;
    let family = model.family().clone();
    let m = model.m();
    let mut hier = match model {
        DriftModel::Hierarchical { prior, .. } => Some(HierState::initial(prior)),
        DriftModel::Conjugate { .. } => None,
    };
    let mut theta = DVector::zeros(match &hier {
        Some(s) => s.theta.len(),
        None => m,
    });
    let mut aug = AugmentedState::from_bridges(obs, config.inner_steps, stream, 0)?;
    let n_seg = aug.n_segments();
    let mut acc_total = vec![0.0; n_seg];
    let mut records = Vec::new();
    let mut drift_rows = Vec::new();
    let mut stats: SufficientStats;

    for iter in 0..config.n_iter {
        let drift = synthesize(&family, theta.as_slice())?;
        let rates = aug.update(&drift, config.mh_sweeps, stream, iter as u64 + 1, None)?;
        for (t, r) in acc_total.iter_mut().zip(&rates) {
            *t += r;
        }
        stats = sufficient_statistics(aug.path(), &family, m)?;
        let mut rng = stream.rng(Domain::Coefficients, iter as u64);
        let (j, s2) = match (model, hier.as_mut()) {
            (DriftModel::Conjugate { prior, .. }, _) => {
                theta = posterior(&stats, prior)?.sample(&mut rng);
                (1, 1.0)
            }
            (DriftModel::Hierarchical { prior, order }, Some(state)) => {
                let (next, _) = hierarchical::sweep(state, &stats, prior, *order, &mut rng)?;
                *state = next;
                theta = state.theta.clone();
                (state.j, state.s2)
            }
            _ => unreachable!("hierarchical state exists iff the model is hierarchical"),
        };
        if iter >= config.burn_in && (iter - config.burn_in).is_multiple_of(config.thinning) {
            let k = theta.len();
            let loglik =
                theta.dot(&stats.mu.rows(0, k)) - 0.5 * (stats.sigma.view((0, 0), (k, k)) * &theta).dot(&theta);
            if !x_grid.is_empty() {
                drift_rows.push(evaluate_on_grid(&family, theta.as_slice(), x_grid));
            }
            records.push(AugRecord {
                iter,
                j,
                s2,
                theta: theta.iter().copied().collect(),
                loglik,
                acceptance: rates,
            });
        }
    }
    Ok(AugChain {
        records,
        x_grid: x_grid.to_vec(),
        drift: drift_rows,
        segment_acceptance: acc_total.iter().map(|t| t / config.n_iter as f64).collect(),
        last: aug,
    })
}

impl AugChain {
    /// Trace of coefficient `k` (0-based); zero where the model is too small.
    pub fn coefficient_trace(&self, k: usize) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.theta.get(k).copied().unwrap_or(0.0))
            .collect()
    }

    pub fn s2_trace(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.s2).collect()
    }

    pub fn loglik_trace(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loglik).collect()
    }

    pub fn mean_acceptance(&self) -> f64 {
        self.segment_acceptance.iter().sum::<f64>() / self.segment_acceptance.len() as f64
    }

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

    /// `iter,j,s2,loglik,acc_rate_seg_1,…,acc_rate_seg_n`.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "iter,j,s2,loglik")?;
        for i in 1..=self.segment_acceptance.len() {
            write!(w, ",acc_rate_seg_{i}")?;
        }
        writeln!(w)?;
        for r in &self.records {
            write!(w, "{},{},{},{}", r.iter, r.j, r.s2, r.loglik)?;
            for a in &r.acceptance {
                write!(w, ",{a}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

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
