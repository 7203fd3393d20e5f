//! MCMC trace diagnostics: batch-means effective sample size, Monte Carlo
//! standard errors and the split-chain potential scale reduction.

use serde::Serialize;

use crate::error::{Error, Result};

/// Fewest retained samples any diagnostic will look at.
pub const MIN_TRACE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub ess: f64,
    pub mcse: f64,
    /// Set when the trace has no variation at all; `ess` is then 1.
    pub degenerate: bool,
}

fn check(trace: &[f64]) -> Result<()> {
    if trace.len() < MIN_TRACE {
        return Err(Error::TraceTooShort {
            len: trace.len(),
            min: MIN_TRACE,
        });
    }
    Ok(())
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Batch-means ESS with `⌊√N⌋` samples per batch.
pub fn summarize(trace: &[f64]) -> Result<TraceSummary> {
    check(trace)?;
    let n = trace.len();
    let (mean, var) = mean_var(trace);
    let scale = mean.abs().max(1.0);
    if var <= (1e-14 * scale).powi(2) {
        return Ok(TraceSummary {
            n,
            mean,
            sd: 0.0,
            ess: 1.0,
            mcse: 0.0,
            degenerate: true,
        });
    }
    let b = (n as f64).sqrt().floor() as usize;
    let a = n / b;
    let batch_means: Vec<f64> = (0..a)
        .map(|k| trace[k * b..(k + 1) * b].iter().sum::<f64>() / b as f64)
        .collect();
    let grand = batch_means.iter().sum::<f64>() / a as f64;
    let var_bm = b as f64 * batch_means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (a - 1) as f64;
    let ess = if var_bm > 0.0 {
        n as f64 * var / var_bm
    } else {
        n as f64
    };
    Ok(TraceSummary {
        n,
        mean,
        sd: var.sqrt(),
        ess,
        mcse: (var / ess).sqrt(),
        degenerate: false,
    })
}

pub fn effective_sample_size(trace: &[f64]) -> Result<f64> {
    Ok(summarize(trace)?.ess)
}

/// Split-chain R̂: each chain is cut in half and the halves are compared
/// as separate chains. Chains are truncated to the shortest length.
pub fn split_rhat(chains: &[&[f64]]) -> Result<f64> {
    let len = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    check(chains.first().map(|c| &c[..len]).unwrap_or(&[]))?;
    let half = len / 2;
    let pieces: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..half], &c[len - half..]]).collect();
    let n = half as f64;
    let stats: Vec<(f64, f64)> = pieces.iter().map(|p| mean_var(p)).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / stats.len() as f64;
    let grand = stats.iter().map(|s| s.0).sum::<f64>() / stats.len() as f64;
    let b = n * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>() / (stats.len() - 1) as f64;
    if w == 0.0 {
        return Ok(if b == 0.0 { 1.0 } else { f64::INFINITY });
    }
    Ok((((n - 1.0) / n * w + b / n) / w).sqrt())
}
