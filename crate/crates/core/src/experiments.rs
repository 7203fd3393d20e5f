//! Command implementations: simulation, inference, the contraction
//! experiment, trace diagnostics and plotting.
//!
//! Each command writes into an output directory and finishes with a
//! `report.json`. If anything fails, the files written so far are removed.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use crate::augmentation::{run_augmented_gibbs, AugChain, DriftModel};
use crate::basis::{BasisFamily, Drift};
use crate::config::{BuiltDrift, BuiltPrior, ContractConfig, InferConfig, RunConfig};
use crate::conjugate::{
    credible_bands, ols_slope, posterior, read_bands_csv, write_bands_csv, BandPoint, GaussianPosterior,
};
use crate::diagnostics::{split_rhat, summarize, TraceSummary};
use crate::error::{invalid, Error, Result};
use crate::hierarchical::{model_posterior, run_chain, Chain};
use crate::likelihood::{occupation_fields, sufficient_statistics, OccupationFields, SufficientStats};
use crate::path::{simulate_path, ObservationSet, SamplePath};
use crate::rng::{pair_key, Domain, SeedStream};

/// Files written by a command, removed again if the command fails.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let p = self.path(name);
        let f = File::create(&p)?;
        self.written.push(p);
        Ok(BufWriter::new(f))
    }

    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let mut w = self.create(name)?;
        f(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Registers a file produced by other means (e.g. a plot).
    pub fn register(&mut self, name: &str) -> PathBuf {
        let p = self.path(name);
        self.written.push(p.clone());
        p
    }

    pub fn names(&self) -> Vec<String> {
        self.written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect()
    }

    fn remove_all(&self) {
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
    }
}

/// Runs `body`, then writes `report.json` with the command name, version,
/// seed, echoed configuration, wall time and whatever `body` returned. On
/// failure every file written so far is deleted.
fn run_command(
    command: &str,
    out: &Path,
    seed: Option<u64>,
    config: Value,
    body: impl FnOnce(&mut Outputs) -> Result<Value>,
) -> Result<Value> {
    let start = Instant::now();
    let mut outputs = Outputs::new(out)?;
    let result = body(&mut outputs).and_then(|summary| {
        let mut files = outputs.names();
        files.push("report.json".into());
        let report = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "config": config,
            "summary": summary,
            "outputs": files,
            "timings": { "wall_seconds": start.elapsed().as_secs_f64() },
        });
        outputs.write_with("report.json", |w| {
            serde_json::to_writer_pretty(&mut *w, &report)?;
            writeln!(w)?;
            Ok(())
        })?;
        Ok(report)
    });
    if result.is_err() {
        outputs.remove_all();
    }
    result
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref()
        .ok_or_else(|| Error::Parse(format!("config has no `{name}` section")))
}

pub fn cmd_simulate(cfg: &RunConfig, seed: u64, out: &Path) -> Result<Value> {
    let sim = section(&cfg.simulate, "simulate")?;
    run_command("simulate", out, Some(seed), serde_json::to_value(cfg)?, |outs| {
        let drift = sim.drift.build()?;
        let path = simulate_path(&drift, sim.x0, sim.horizon, sim.n_steps, &SeedStream::new(seed))?;
        outs.write_with("path.csv", |w| path.write_csv(w))?;
        let mut summary = json!({
            "T": path.duration(),
            "n_steps": path.n_steps(),
            "dt": path.dt(),
            "range": [path.range().0, path.range().1],
            "x_T": path.last(),
        });
        if let Some(stride) = sim.obs_stride {
            let obs = path.observe(stride)?;
            outs.write_with("observations.csv", |w| obs.write_csv(w))?;
            summary["observations"] = json!({ "n": obs.values().len(), "delta": obs.delta() });
        }
        // read back what was written
        let back = SamplePath::read_csv(BufReader::new(File::open(outs.path("path.csv"))?))?;
        if back.len() != path.len() {
            return Err(Error::Parse("path.csv failed validation".into()));
        }
        Ok(summary)
    })
}

/// Input data of an inference run.
#[derive(Debug, Clone)]
pub enum Data {
    Path(SamplePath),
    Observations(ObservationSet),
}

impl Data {
    pub fn load(icfg: &InferConfig, base: &Path) -> Result<Self> {
        let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        match (&icfg.data.path, &icfg.data.observations) {
            (Some(p), None) => Ok(Data::Path(SamplePath::read_csv(BufReader::new(File::open(resolve(
                p,
            ))?))?)),
            (None, Some(p)) => Ok(Data::Observations(ObservationSet::read_csv(BufReader::new(
                File::open(resolve(p))?,
            ))?)),
            _ => Err(invalid("data", "give exactly one of `path` and `observations`")),
        }
    }
}

/// Everything an inference run produces.
#[derive(Debug, Clone)]
pub struct InferResult {
    pub method: &'static str,
    pub bands: Vec<BandPoint>,
    pub stats: Option<SufficientStats>,
    pub posterior: Option<GaussianPosterior>,
    pub chain: Option<Chain>,
    pub aug_chain: Option<AugChain>,
    pub occupation: Option<OccupationFields>,
    pub model_probabilities: Option<Vec<f64>>,
    pub diagnostics: Value,
}

fn trace_summary(name: &str, trace: &[f64]) -> Value {
    match summarize(trace) {
        Ok(s) => json!({
            "name": name,
            "mean": s.mean,
            "sd": s.sd,
            "ess": s.ess,
            "mcse": s.mcse,
            "degenerate": s.degenerate,
            "split_rhat": split_rhat(&[trace]).ok(),
        }),
        Err(e) => json!({ "name": name, "error": e.to_string() }),
    }
}

/// Smallest ESS over every tenth grid point of the drift draws.
fn min_drift_ess(drift: &[Vec<f64>]) -> Option<f64> {
    let n = drift.first()?.len();
    (0..n)
        .step_by(10)
        .filter_map(|i| {
            let col: Vec<f64> = drift.iter().map(|r| r[i]).collect();
            summarize(&col).ok().map(|s: TraceSummary| s.ess)
        })
        .reduce(f64::min)
}

/// Posterior inference on `data` as configured.
pub fn infer(data: &Data, icfg: &InferConfig, seed: u64) -> Result<InferResult> {
    let family = icfg.family()?;
    let prior = icfg.prior.build(&family)?;
    let xs = icfg.x_grid()?;
    let stream = SeedStream::new(seed);
    let occupation = match (data, family.is_periodic()) {
        (Data::Path(p), true) => Some(occupation_fields(p, icfg.occupation_cells)?),
        _ => None,
    };
    match (data, prior) {
        (Data::Path(path), BuiltPrior::Conjugate(prior)) => {
            let stats = sufficient_statistics(path, &family, prior.m())?;
            let post = posterior(&stats, &prior)?;
            let bands = credible_bands(&post, &family, &xs, icfg.level)?;
            Ok(InferResult {
                method: "conjugate",
                bands,
                stats: Some(stats),
                posterior: Some(post),
                chain: None,
                aug_chain: None,
                occupation,
                model_probabilities: None,
                diagnostics: json!({ "exact": true }),
            })
        }
        (Data::Path(path), BuiltPrior::Hierarchical(prior)) => {
            let stats = sufficient_statistics(path, prior.family(), prior.m_max())?;
            let probs = model_posterior(&stats, &prior)?;
            let mut rng = stream.rng(Domain::Chain, 0);
            let chain = run_chain(&stats, &prior, &icfg.chain.chain_config(), &xs, None, &mut rng)?;
            let bands = chain.bands(icfg.level)?;
            let diagnostics = json!({
                "jump_acceptance": chain.jump_acceptance,
                "traces": [
                    trace_summary("s2", &chain.s2_trace()),
                    trace_summary("loglik", &chain.loglik_trace()),
                    trace_summary("j", &chain.j_trace()),
                ],
                "min_drift_ess": min_drift_ess(&chain.drift),
                "model_frequencies": chain.model_frequencies(prior.j_max()),
            });
            Ok(InferResult {
                method: "hierarchical",
                bands,
                stats: Some(stats),
                posterior: None,
                chain: Some(chain),
                aug_chain: None,
                occupation,
                model_probabilities: Some(probs),
                diagnostics,
            })
        }
        (Data::Observations(obs), prior) => {
            let model = match prior {
                BuiltPrior::Conjugate(prior) => DriftModel::Conjugate {
                    family: family.clone(),
                    prior,
                },
                BuiltPrior::Hierarchical(prior) => DriftModel::Hierarchical {
                    prior,
                    order: icfg.chain.order,
                },
            };
            let chain = run_augmented_gibbs(obs, &model, &icfg.aug_config(), &xs, &stream)?;
            let bands = chain.bands(icfg.level)?;
            let acc = &chain.segment_acceptance;
            let diagnostics = json!({
                "acceptance": {
                    "mean": chain.mean_acceptance(),
                    "min": acc.iter().cloned().fold(f64::INFINITY, f64::min),
                    "max": acc.iter().cloned().fold(0.0, f64::max),
                },
                "traces": [
                    trace_summary("theta_1", &chain.coefficient_trace(0)),
                    trace_summary("s2", &chain.s2_trace()),
                    trace_summary("loglik", &chain.loglik_trace()),
                ],
                "min_drift_ess": min_drift_ess(&chain.drift),
            });
            Ok(InferResult {
                method: match model {
                    DriftModel::Conjugate { .. } => "augmented-conjugate",
                    DriftModel::Hierarchical { .. } => "augmented-hierarchical",
                },
                bands,
                stats: None,
                posterior: None,
                chain: None,
                aug_chain: Some(chain),
                occupation: None,
                model_probabilities: None,
                diagnostics,
            })
        }
    }
}

/// Root-mean-square difference between the band mean and `truth` on the
/// band grid.
pub fn rms_error<D: Drift + ?Sized>(bands: &[BandPoint], truth: &D) -> f64 {
    (bands.iter().map(|b| (b.mean - truth.eval(b.x)).powi(2)).sum::<f64>() / bands.len() as f64).sqrt()
}

pub fn cmd_infer(cfg: &RunConfig, seed: u64, out: &Path, base: &Path) -> Result<Value> {
    let icfg = section(&cfg.infer, "infer")?;
    run_command("infer", out, Some(seed), serde_json::to_value(cfg)?, |outs| {
        let data = Data::load(icfg, base)?;
        let result = infer(&data, icfg, seed)?;
        outs.write_with("bands.csv", |w| write_bands_csv(&result.bands, w))?;
        if let Some(stats) = &result.stats {
            outs.write_with("stats.json", |w| Ok(w.write_all(stats.to_json()?.as_bytes())?))?;
        }
        if let Some(post) = &result.posterior {
            outs.write_with("posterior.json", |w| Ok(w.write_all(post.to_json()?.as_bytes())?))?;
        }
        if let Some(occ) = &result.occupation {
            outs.write_with("occupation.csv", |w| occ.write_csv(w))?;
        }
        if let Some(chain) = &result.chain {
            outs.write_with("trace.csv", |w| chain.write_trace_csv(w))?;
            outs.write_with("drift.csv", |w| chain.write_drift_csv(w))?;
        }
        if let Some(chain) = &result.aug_chain {
            outs.write_with("trace.csv", |w| chain.write_trace_csv(w))?;
            outs.write_with("drift.csv", |w| chain.write_drift_csv(w))?;
        }
        let back = read_bands_csv(BufReader::new(File::open(outs.path("bands.csv"))?))?;
        if back.len() != result.bands.len() {
            return Err(Error::Parse("bands.csv failed validation".into()));
        }
        let widths: Vec<f64> = result.bands.iter().map(|b| b.width()).collect();
        let mut summary = json!({
            "method": result.method,
            "level": icfg.level,
            "grid_points": result.bands.len(),
            "mean_band_width": widths.iter().sum::<f64>() / widths.len() as f64,
            "diagnostics": result.diagnostics,
            "model_probabilities": result.model_probabilities,
        });
        if let Some(t) = &icfg.true_drift {
            summary["rms_error_vs_truth"] = json!(rms_error(&result.bands, &t.build()?));
        }
        Ok(summary)
    })
}

/// Errors of the contraction experiment.
#[derive(Debug, Clone)]
pub struct ContractionReport {
    pub horizons: Vec<f64>,
    /// `errors[i][r]`: L² error at horizon `i`, replicate `r`.
    pub errors: Vec<Vec<f64>>,
    pub mean_errors: Vec<f64>,
    /// Log-log slope of mean error against horizon and its standard error;
    /// absent for a single horizon.
    pub slope: Option<(f64, f64)>,
}

/// L²([0,1]) distance between `Σ c_k ψ_k` and `truth`, midpoint rule.
pub fn l2_error<D: Drift + ?Sized>(family: &BasisFamily, coeffs: &[f64], truth: &D, grid: usize) -> f64 {
    let (lo, hi) = family.domain();
    let h = (hi - lo) / grid as f64;
    let mut psi = vec![0.0; coeffs.len()];
    let sum: f64 = (0..grid)
        .map(|i| {
            let x = lo + (i as f64 + 0.5) * h;
            family.fill_values(x, &mut psi);
            let b: f64 = psi.iter().zip(coeffs).map(|(p, c)| p * c).sum();
            (b - truth.eval(x)).powi(2)
        })
        .sum();
    (sum * h).sqrt()
}

pub fn contraction(ccfg: &ContractConfig, seed: u64) -> Result<ContractionReport> {
    let family = BasisFamily::parse(&ccfg.basis)?;
    let prior = match ccfg.prior.build(&family)? {
        BuiltPrior::Conjugate(p) => p,
        BuiltPrior::Hierarchical(_) => {
            return Err(invalid("prior", "the contraction experiment uses a conjugate prior"))
        }
    };
    let truth: BuiltDrift = ccfg.drift.build()?;
    let master = SeedStream::new(seed);
    let mut errors = Vec::new();
    for (i, &t) in ccfg.horizons.iter().enumerate() {
        let n_steps = (t / ccfg.dt).round().max(1.0) as usize;
        let row = (0..ccfg.replicates)
            .map(|r| {
                let stream = master.child(pair_key(i as u64, r as u64));
                let path = simulate_path(&truth, ccfg.x0, t, n_steps, &stream)?;
                let stats = sufficient_statistics(&path, &family, prior.m())?;
                let post = posterior(&stats, &prior)?;
                Ok(l2_error(&family, post.mean().as_slice(), &truth, ccfg.error_grid))
            })
            .collect::<Result<Vec<f64>>>()?;
        errors.push(row);
    }
    let mean_errors: Vec<f64> = errors.iter().map(|r| r.iter().sum::<f64>() / r.len() as f64).collect();
    let slope = (ccfg.horizons.len() >= 2).then(|| {
        let pts: Vec<(f64, f64)> = ccfg
            .horizons
            .iter()
            .zip(&mean_errors)
            .map(|(t, e)| (t.ln(), e.ln()))
            .collect();
        ols_slope(&pts)
    });
    Ok(ContractionReport {
        horizons: ccfg.horizons.clone(),
        errors,
        mean_errors,
        slope,
    })
}

pub fn cmd_contract(cfg: &RunConfig, seed: u64, out: &Path) -> Result<Value> {
    let ccfg = section(&cfg.contract, "contract")?;
    run_command("contract", out, Some(seed), serde_json::to_value(cfg)?, |outs| {
        let rep = contraction(ccfg, seed)?;
        outs.write_with("contract.csv", |w| {
            writeln!(w, "horizon,replicate,l2_error")?;
            for (t, row) in rep.horizons.iter().zip(&rep.errors) {
                for (r, e) in row.iter().enumerate() {
                    writeln!(w, "{t},{r},{e}")?;
                }
            }
            Ok(())
        })?;
        let decreasing = rep.mean_errors.windows(2).all(|w| w[1] < w[0]);
        Ok(json!({
            "horizons": rep.horizons,
            "mean_errors": rep.mean_errors,
            "strictly_decreasing": decreasing,
            "slope": rep.slope.map(|s| s.0),
            "slope_se": rep.slope.map(|s| s.1).filter(|v| v.is_finite()),
        }))
    })
}

/// A numeric CSV: header names and columns.
pub struct Table {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty trace file".into()))??;
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut columns = vec![Vec::new(); names.len()];
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<&str> = line.split(',').collect();
            if vals.len() != names.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} columns",
                    i + 2,
                    names.len()
                )));
            }
            for (c, v) in columns.iter_mut().zip(vals) {
                c.push(
                    v.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Parse(format!("line {}: {e}", i + 2)))?,
                );
            }
        }
        Ok(Self { names, columns })
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }
}

/// Levels at which traces are flagged; flags are reported, never enforced.
#[derive(Debug, Clone, Copy)]
pub struct Thresholds {
    pub min_ess: f64,
    pub max_rhat: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            min_ess: 100.0,
            max_rhat: 1.01,
        }
    }
}

/// ESS, split-R̂ and acceptance summaries of a trace CSV.
pub fn diagnose(table: &Table, th: Thresholds) -> Result<Value> {
    let mut traces = Vec::new();
    let mut acc_means = Vec::new();
    for (name, col) in table.names.iter().zip(&table.columns) {
        if name == "iter" {
            continue;
        }
        if name.starts_with("acc_rate_seg_") {
            acc_means.push(col.iter().sum::<f64>() / col.len().max(1) as f64);
            continue;
        }
        let s = summarize(col)?;
        let rhat = split_rhat(&[col])?;
        traces.push(json!({
            "name": name,
            "mean": s.mean,
            "sd": s.sd,
            "ess": s.ess,
            "mcse": s.mcse,
            "degenerate": s.degenerate,
            "split_rhat": rhat,
            "low_ess": s.ess < th.min_ess,
            "high_rhat": rhat.is_nan() || rhat > th.max_rhat,
        }));
    }
    let mut out = json!({
        "samples": table.columns.first().map_or(0, |c| c.len()),
        "thresholds": { "min_ess": th.min_ess, "max_rhat": th.max_rhat },
        "traces": traces,
    });
    if !acc_means.is_empty() {
        out["acceptance"] = json!({
            "segments": acc_means.len(),
            "mean": acc_means.iter().sum::<f64>() / acc_means.len() as f64,
            "min": acc_means.iter().cloned().fold(f64::INFINITY, f64::min),
            "max": acc_means.iter().cloned().fold(0.0, f64::max),
        });
    }
    Ok(out)
}

pub fn cmd_diag(trace: &Path, out: &Path, th: Thresholds) -> Result<Value> {
    run_command("diag", out, None, json!({ "trace": trace }), |outs| {
        let table = Table::read(BufReader::new(File::open(trace)?))?;
        let summary = diagnose(&table, th)?;
        outs.write_with("diag.json", |w| {
            serde_json::to_writer_pretty(&mut *w, &summary)?;
            writeln!(w)?;
            Ok(())
        })?;
        Ok(summary)
    })
}

fn plot_err<E: std::fmt::Display>(e: E) -> Error {
    Error::Io(std::io::Error::other(format!("plotting: {e}")))
}

/// Renders `bands.svg` (mean and band, optionally the true drift) and, if a
/// path is given, `histogram.svg` of its values.
pub fn render_plots(
    bands: &[BandPoint],
    truth: Option<&BuiltDrift>,
    path: Option<&SamplePath>,
    outs: &mut Outputs,
) -> Result<()> {
    use plotters::prelude::*;
    if bands.len() < 2 {
        return Err(invalid("bands", "need at least two band points"));
    }
    let x0 = bands.first().unwrap().x;
    let x1 = bands.last().unwrap().x;
    let mut ys: Vec<f64> = bands.iter().flat_map(|b| [b.lower, b.upper]).collect();
    if let Some(t) = truth {
        ys.extend(bands.iter().map(|b| t.eval(b.x)));
    }
    let y0 = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let y1 = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.05 * (y1 - y0).max(1e-9);
    let file = outs.register("bands.svg");
    {
        let root = SVGBackend::new(&file, (800, 500)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .margin(15)
            .x_label_area_size(35)
            .y_label_area_size(50)
            .build_cartesian_2d(x0..x1, (y0 - pad)..(y1 + pad))
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("x")
            .y_desc("b(x)")
            .draw()
            .map_err(plot_err)?;
        chart
            .draw_series(LineSeries::new(
                bands.iter().map(|b| (b.x, b.mean)),
                BLUE.stroke_width(2),
            ))
            .map_err(plot_err)?;
        for edge in [|b: &BandPoint| b.lower, |b: &BandPoint| b.upper] {
            chart
                .draw_series(DashedLineSeries::new(
                    bands.iter().map(|b| (b.x, edge(b))),
                    6,
                    4,
                    BLUE.into(),
                ))
                .map_err(plot_err)?;
        }
        if let Some(t) = truth {
            chart
                .draw_series(LineSeries::new(
                    bands.iter().map(|b| (b.x, t.eval(b.x))),
                    BLACK.stroke_width(2),
                ))
                .map_err(plot_err)?;
        }
        root.present().map_err(plot_err)?;
    }
    if let Some(path) = path {
        let (lo, hi) = path.range();
        let bins = 60;
        let w = (hi - lo).max(1e-12) / bins as f64;
        let mut counts = vec![0usize; bins];
        for v in path.values() {
            counts[(((v - lo) / w) as usize).min(bins - 1)] += 1;
        }
        let top = *counts.iter().max().unwrap() as f64;
        let file = outs.register("histogram.svg");
        let root = SVGBackend::new(&file, (800, 400)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .margin(15)
            .x_label_area_size(35)
            .y_label_area_size(60)
            .build_cartesian_2d(lo..hi, 0.0..top * 1.05)
            .map_err(plot_err)?;
        chart
            .configure_mesh()
            .x_desc("x")
            .y_desc("count")
            .draw()
            .map_err(plot_err)?;
        chart
            .draw_series(counts.iter().enumerate().map(|(i, &c)| {
                let a = lo + i as f64 * w;
                Rectangle::new([(a, 0.0), (a + w, c as f64)], BLUE.mix(0.5).filled())
            }))
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    Ok(())
}

pub fn cmd_plot(bands: &Path, path: Option<&Path>, truth: Option<&BuiltDrift>, out: &Path) -> Result<Value> {
    run_command("plot", out, None, json!({ "bands": bands, "path": path }), |outs| {
        let b = read_bands_csv(BufReader::new(File::open(bands)?))?;
        let p = match path {
            Some(p) => Some(SamplePath::read_csv(BufReader::new(File::open(p)?))?),
            None => None,
        };
        render_plots(&b, truth, p.as_ref(), outs)?;
        Ok(json!({ "points": b.len() }))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{DriftConfig, PriorConfig};

    #[test]
    fn l2_error_of_exact_coefficients_is_zero() {
        let fam = BasisFamily::fourier();
        let truth = DriftConfig::Basis {
            basis: "fourier".into(),
            coeffs: vec![0.5, -1.0, 0.25],
        }
        .build()
        .unwrap();
        assert!(l2_error(&fam, &[0.5, -1.0, 0.25, 0.0], &truth, 500) < 1e-12);
        // orthonormality: error of a single unit coefficient is 1
        assert!((l2_error(&fam, &[0.5, -1.0, 1.25], &truth, 500) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contraction_single_horizon_has_no_slope() {
        let c = ContractConfig {
            drift: DriftConfig::Basis {
                basis: "fourier".into(),
                coeffs: vec![1.0],
            },
            horizons: vec![20.0],
            replicates: 2,
            dt: 0.01,
            x0: 0.0,
            basis: "fourier".into(),
            prior: PriorConfig::Spectral {
                eta: 0.02,
                delta: 0.0,
                p: 2,
                m: Some(10),
                truncation_ratio: 1e-8,
            },
            error_grid: 200,
        };
        let r = contraction(&c, 1).unwrap();
        assert!(r.slope.is_none());
        assert_eq!(r.errors[0].len(), 2);
    }

    #[test]
    fn outputs_are_removed_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let res = run_command("x", dir.path(), None, json!({}), |outs| {
            outs.write_with("partial.csv", |w| Ok(writeln!(w, "a")?))?;
            Err(invalid("test", "forced failure"))
        });
        assert!(res.is_err());
        assert!(!dir.path().join("partial.csv").exists());
        assert!(!dir.path().join("report.json").exists());
    }

    #[test]
    fn diagnose_reads_augmented_traces() {
        let mut csv = String::from("iter,j,s2,loglik,acc_rate_seg_1,acc_rate_seg_2\n");
        for i in 0..50 {
            csv.push_str(&format!(
                "{i},1,{},{},1,0.{}\n",
                1.0 + (i % 7) as f64,
                -(i as f64).sin(),
                i % 10
            ));
        }
        let t = Table::read(csv.as_bytes()).unwrap();
        let d = diagnose(&t, Thresholds::default()).unwrap();
        assert_eq!(d["acceptance"]["segments"], 2);
        assert_eq!(d["traces"][0]["name"], "j");
        assert_eq!(d["traces"][0]["degenerate"], true);
        assert_eq!(d["traces"][0]["low_ess"], true);
        let short = Table::read("iter,s2\n1,2\n".as_bytes()).unwrap();
        assert!(diagnose(&short, Thresholds::default()).is_err());
    }
}
