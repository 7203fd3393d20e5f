//! Sample paths on uniform grids: Euler simulation, Brownian bridges,
//! quadratic variation, and the unit-diffusion transform.
//!
//! All stochastic integrals in this crate use the left-point (Itô) rule on
//! the path grid.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::basis::Drift;
use crate::error::{invalid, Error, Result};
use crate::rng::{Domain, SeedStream};

/// Euler steps per noise stream. Chunk `c` draws from stream key `c`, so
/// chunks can be generated independently.
pub const NOISE_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
}

impl SamplePath {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(
                "dt",
                format!("grid step must be positive and finite, got {dt}"),
            ));
        }
        if !t0.is_finite() {
            return Err(invalid("t0", "start time must be finite"));
        }
        if values.len() < 2 {
            return Err(invalid("values", "a path needs at least 2 values"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid("values", format!("non-finite value at index {i}")));
        }
        Ok(Self { t0, dt, values })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access for in-place updates that keep values finite.
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn duration(&self) -> f64 {
        self.n_steps() as f64 * self.dt
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn range(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Same values in reverse order on the same grid.
    pub fn time_reversed(&self) -> SamplePath {
        let mut values = self.values.clone();
        values.reverse();
        SamplePath { values, ..*self }
    }

    /// Every `stride`-th value, starting with the first. `n_steps` must be a
    /// multiple of `stride`.
    pub fn subsample(&self, stride: usize) -> Result<SamplePath> {
        if stride == 0 || !self.n_steps().is_multiple_of(stride) {
            return Err(invalid(
                "stride",
                format!("{stride} does not divide {} steps", self.n_steps()),
            ));
        }
        let values = self.values.iter().step_by(stride).copied().collect();
        SamplePath::new(self.t0, self.dt * stride as f64, values)
    }

    /// Observations every `stride` grid steps.
    pub fn observe(&self, stride: usize) -> Result<ObservationSet> {
        let sub = self.subsample(stride)?;
        ObservationSet::new(sub.dt, sub.values)
    }

    /// Refines the grid by `factor`, filling each step with a Brownian bridge
    /// between its endpoints. Original grid values are kept exactly.
    pub fn refine_with_bridges<R: Rng + ?Sized>(&self, factor: usize, rng: &mut R) -> Result<SamplePath> {
        if factor == 0 {
            return Err(invalid("factor", "refinement factor must be positive"));
        }
        let mut values = Vec::with_capacity(self.n_steps() * factor + 1);
        values.push(self.values[0]);
        for w in self.values.windows(2) {
            let seg = sample_brownian_bridge(w[0], w[1], self.dt, factor, rng)?;
            values.extend_from_slice(&seg.values[1..]);
        }
        SamplePath::new(self.t0, self.dt / factor as f64, values)
    }

    /// Glues consecutive segments sharing endpoints and grid step.
    pub fn concat(segments: &[SamplePath]) -> Result<SamplePath> {
        let first = segments.first().ok_or_else(|| invalid("segments", "nothing to glue"))?;
        let mut values = first.values.clone();
        for s in &segments[1..] {
            if s.dt != first.dt {
                return Err(invalid("segments", "segments must share the grid step"));
            }
            if s.first() != *values.last().unwrap() {
                return Err(invalid("segments", "consecutive segments must share endpoints"));
            }
            values.extend_from_slice(&s.values[1..]);
        }
        SamplePath::new(first.t0, first.dt, values)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,x")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", self.time(i), v)?;
        }
        Ok(())
    }

    /// Reads a `t,x` CSV. Times must lie on a uniform grid.
    pub fn read_csv<R: BufRead>(r: R) -> Result<SamplePath> {
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in data_lines(r, "t,x")? {
            let (t, x) = parse_pair(&line, lineno)?;
            times.push(t);
            values.push(x);
        }
        if times.len() < 2 {
            return Err(Error::Parse("path CSV needs at least 2 rows".into()));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        let tol = 1e-9 * dt.abs().max(times[times.len() - 1].abs());
        for (i, t) in times.iter().enumerate() {
            if (t - (times[0] + i as f64 * dt)).abs() > tol {
                return Err(Error::Parse(format!("row {i}: time {t} is off the uniform grid")));
            }
        }
        SamplePath::new(times[0], dt, values)
    }
}

/// Low-frequency observations `X_0, X_Δ, …, X_{nΔ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSet {
    delta: f64,
    values: Vec<f64>,
}

impl ObservationSet {
    pub fn new(delta: f64, values: Vec<f64>) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(invalid(
                "delta",
                format!("observation gap must be positive, got {delta}"),
            ));
        }
        if values.len() < 2 {
            return Err(invalid("values", "need at least one observation interval (n ≥ 1)"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("values", "observations must be finite"));
        }
        Ok(Self { delta, values })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of intervals `n`.
    pub fn n_intervals(&self) -> usize {
        self.values.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.delta * self.n_intervals() as f64
    }

    pub fn as_path(&self) -> SamplePath {
        SamplePath {
            t0: 0.0,
            dt: self.delta,
            values: self.values.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# delta={}", self.delta)?;
        writeln!(w, "k,x")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(w, "{k},{v}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<ObservationSet> {
        let mut delta = None;
        let mut values = Vec::new();
        let mut header_seen = false;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some(v) = meta.trim().strip_prefix("delta=") {
                    delta = Some(
                        v.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::Parse(format!("delta: {e}")))?,
                    );
                }
                continue;
            }
            if !header_seen {
                if line != "k,x" {
                    return Err(Error::Parse(format!("expected header `k,x`, got `{line}`")));
                }
                header_seen = true;
                continue;
            }
            let (k, x) = parse_pair(line, i + 1)?;
            if k != values.len() as f64 {
                return Err(Error::Parse(format!("line {}: expected index {}", i + 1, values.len())));
            }
            values.push(x);
        }
        let delta = delta.ok_or_else(|| Error::Parse("missing `# delta=<value>` line".into()))?;
        ObservationSet::new(delta, values)
    }
}

fn data_lines<R: BufRead>(r: R, header: &str) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    let mut header_seen = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !header_seen {
            if trimmed != header {
                return Err(Error::Parse(format!("expected header `{header}`, got `{trimmed}`")));
            }
            header_seen = true;
            continue;
        }
        out.push((i + 1, trimmed.to_string()));
    }
    if !header_seen {
        return Err(Error::Parse(format!("missing header `{header}`")));
    }
    Ok(out)
}

fn parse_pair(line: &str, lineno: usize) -> Result<(f64, f64)> {
    let (a, b) = line
        .split_once(',')
        .ok_or_else(|| Error::Parse(format!("line {lineno}: expected two columns")))?;
    let parse = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("line {lineno}: `{s}`: {e}")))
    };
    Ok((parse(a)?, parse(b)?))
}

/// Euler scheme for `dX = b(X) dt + dW`, `X_0 = x0`, on `[0, horizon]` with
/// `n_steps` steps. Noise comes from `noise` in chunks of [`NOISE_CHUNK`]
/// steps, one standard normal per step.
pub fn simulate_path<D: Drift + ?Sized>(
    drift: &D,
    x0: f64,
    horizon: f64,
    n_steps: usize,
    noise: &SeedStream,
) -> Result<SamplePath> {
    if n_steps == 0 {
        return Err(invalid("n_steps", "need at least one step"));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(invalid("horizon", format!("must be positive, got {horizon}")));
    }
    if !x0.is_finite() {
        return Err(invalid("x0", "initial state must be finite"));
    }
    let dt = horizon / n_steps as f64;
    let sqrt_dt = dt.sqrt();
    let mut values = Vec::with_capacity(n_steps + 1);
    values.push(x0);
    let mut x = x0;
    let mut step = 0;
    for chunk in 0..n_steps.div_ceil(NOISE_CHUNK) {
        let mut rng = noise.rng(Domain::PathNoise, chunk as u64);
        let end = ((chunk + 1) * NOISE_CHUNK).min(n_steps);
        while step < end {
            let b = drift.eval(x);
            let z: f64 = rng.sample(StandardNormal);
            x += b * dt + sqrt_dt * z;
            if !(b.is_finite() && x.is_finite()) {
                return Err(Error::SimulationDiverged { step, state: x });
            }
            values.push(x);
            step += 1;
        }
    }
    Ok(SamplePath { t0: 0.0, dt, values })
}

/// Brownian bridge from `start` to `end` over `duration`, on `n_steps`
/// steps. Built sequentially from the conditional law of each next point
/// given the previous one and the endpoint; the last value is `end` exactly.
pub fn sample_brownian_bridge<R: Rng + ?Sized>(
    start: f64,
    end: f64,
    duration: f64,
    n_steps: usize,
    rng: &mut R,
) -> Result<SamplePath> {
    if n_steps == 0 {
        return Err(invalid("n_steps", "need at least one step"));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(invalid("duration", format!("must be positive, got {duration}")));
    }
    if !(start.is_finite() && end.is_finite()) {
        return Err(invalid("endpoints", "bridge endpoints must be finite"));
    }
    let dt = duration / n_steps as f64;
    let mut values = Vec::with_capacity(n_steps + 1);
    values.push(start);
    fill_bridge_interior(start, end, dt, n_steps, rng, &mut values);
    values.push(end);
    Ok(SamplePath { t0: 0.0, dt, values })
}

/// Pushes the `n_steps - 1` interior points of a bridge onto `out`.
pub(crate) fn fill_bridge_interior<R: Rng + ?Sized>(
    start: f64,
    end: f64,
    dt: f64,
    n_steps: usize,
    rng: &mut R,
    out: &mut Vec<f64>,
) {
    let mut x = start;
    for i in 1..n_steps {
        let remaining = (n_steps - i + 1) as f64 * dt;
        let mean = x + (end - x) * dt / remaining;
        let var = dt * (remaining - dt) / remaining;
        let z: f64 = rng.sample(StandardNormal);
        x = mean + var.sqrt() * z;
        out.push(x);
    }
}

/// Running sum of squared increments; entry `i` estimates `⟨X⟩` at grid
/// time `i`.
pub fn quadratic_variation(path: &SamplePath) -> Vec<f64> {
    let mut out = Vec::with_capacity(path.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in path.values.windows(2) {
        let d = w[1] - w[0];
        acc += d * d;
        out.push(acc);
    }
    out
}

/// Maps each value through `F(x) = ∫_0^x dy / σ(y)`, which turns
/// `dX = b dt + σ(X) dW` into a unit-diffusion process.
///
/// `F` is tabulated by composite trapezoid quadrature on a grid covering
/// `0` and the path range; the grid is doubled until the Richardson error
/// estimate is below `1e-8` of the value range.
pub fn unit_diffusion_transform<S: Fn(f64) -> f64>(path: &SamplePath, sigma: S) -> Result<SamplePath> {
    let (vmin, vmax) = path.range();
    let lo = vmin.min(0.0);
    let hi = vmax.max(0.0);
    let span = hi - lo;
    if span == 0.0 {
        return Ok(path.clone());
    }
    let inv = |x: f64| -> Result<f64> {
        let s = sigma(x);
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Domain(format!("sigma({x}) = {s} is not positive")));
        }
        Ok(1.0 / s)
    };
    let tol = 1e-8 * (vmax - vmin).max(f64::MIN_POSITIVE);
    let mut cells = 64usize;
    let mut table = trapezoid_table(&inv, lo, span, cells)?;
    loop {
        let finer = trapezoid_table(&inv, lo, span, 2 * cells)?;
        let err = table
            .iter()
            .enumerate()
            .map(|(i, v)| (finer[2 * i] - v).abs() / 3.0)
            .fold(0.0, f64::max);
        table = finer;
        cells *= 2;
        if err < tol || cells >= 1 << 24 {
            break;
        }
    }
    let h = span / cells as f64;
    let origin = interpolate_table(&table, &inv, lo, h, 0.0)?;
    let values = path
        .values
        .iter()
        .map(|&x| interpolate_table(&table, &inv, lo, h, x).map(|v| v - origin))
        .collect::<Result<Vec<_>>>()?;
    SamplePath::new(path.t0, path.dt, values)
}

fn trapezoid_table(inv: &impl Fn(f64) -> Result<f64>, lo: f64, span: f64, cells: usize) -> Result<Vec<f64>> {
    let h = span / cells as f64;
    let mut table = Vec::with_capacity(cells + 1);
    table.push(0.0);
    let mut prev = inv(lo)?;
    let mut acc = 0.0;
    for i in 1..=cells {
        let cur = inv(lo + i as f64 * h)?;
        acc += 0.5 * h * (prev + cur);
        table.push(acc);
        prev = cur;
    }
    Ok(table)
}

fn interpolate_table(table: &[f64], inv: &impl Fn(f64) -> Result<f64>, lo: f64, h: f64, x: f64) -> Result<f64> {
    let cells = table.len() - 1;
    let i = (((x - lo) / h).floor() as usize).min(cells - 1);
    let left = lo + i as f64 * h;
    let partial = 0.5 * (x - left) * (inv(left)? + inv(x)?);
    Ok(table[i] + partial)
}
