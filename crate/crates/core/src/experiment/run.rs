//! One experiment end to end: sampling, optional smoothing, training,
//! validation against the cached oracle, and the report directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, IpBudget, Smoothing, ValidationGrid};
use crate::error::{Error, Result};
use crate::gp::{smooth_boundary, KernelSpec, SmoothedBoundary};
use crate::pdes::{
    reference_burgers, reference_schrodinger, sample, trapezoid, ProblemKind, ProblemSpec, ReferenceMeta,
    ReferenceSolution, SampleSet,
};
use crate::sgp::{sparse_smooth_boundary, sparse_smooth_boundary_target, IpSelectConfig, IpSelection, IpSelectionRecord};
use crate::training::{
    field_on_grid, save_model, train, uncertainty_retrain, validation_mse, write_history, Assembly, HistoryRow,
    LossBreakdown, Model, Task,
};

/// Bumped whenever an oracle changes numerically, to invalidate caches.
const ORACLE_VERSION: u32 = 1;

#[derive(Serialize)]
struct ReferenceKey<'a> {
    oracle_version: u32,
    problem: &'a ProblemSpec,
    grid: ValidationGrid,
}

/// Cache file for a reference: content hash of the oracle configuration.
pub fn reference_cache_path(problem: &ProblemSpec, grid: ValidationGrid, cache_dir: &Path) -> Result<PathBuf> {
    let key = serde_json::to_vec(&ReferenceKey {
        oracle_version: ORACLE_VERSION,
        problem,
        grid,
    })?;
    let digest = hex::encode(Sha256::digest(&key));
    let kind = match problem.kind {
        ProblemKind::Schrodinger => "schrodinger",
        ProblemKind::Burgers => "burgers",
    };
    Ok(cache_dir.join(format!("reference-{kind}-{}.csv", &digest[..16])))
}

pub fn build_reference(problem: &ProblemSpec, grid: ValidationGrid) -> Result<ReferenceSolution> {
    match problem.kind {
        ProblemKind::Schrodinger => reference_schrodinger(&problem.domain, grid.nx, grid.nt),
        ProblemKind::Burgers => reference_burgers(&problem.domain, problem.viscosity, grid.nx, grid.nt),
    }
}

/// Loads the reference from the cache or builds and stores it.
pub fn cached_reference(problem: &ProblemSpec, grid: ValidationGrid, cache_dir: &Path) -> Result<ReferenceSolution> {
    let path = reference_cache_path(problem, grid, cache_dir)?;
    if path.exists() {
        match ReferenceSolution::read(&path) {
            Ok(r) if r.meta.kind == problem.kind && r.nx() == grid.nx && r.nt() == grid.nt => return Ok(r),
            _ => log::warn!("discarding unreadable reference cache {}", path.display()),
        }
    }
    let reference = build_reference(problem, grid)?;
    fs::create_dir_all(cache_dir)?;
    // write under a temporary name so concurrent runs never read a partial file
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    reference.write(&tmp)?;
    fs::rename(ReferenceSolution::sidecar_path(&tmp), ReferenceSolution::sidecar_path(&path))?;
    fs::rename(&tmp, &path)?;
    Ok(reference)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Training diverged; the report holds the last finite checkpoint.
    Diverged { iteration: usize, loss: Option<f64> },
}

/// Field along x at one reference time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceExtract {
    pub requested_t: f64,
    /// Nearest reference grid time.
    pub t: f64,
    pub x: Vec<f64>,
    /// Per channel.
    pub model: Vec<Vec<f64>>,
    pub reference: Vec<Vec<f64>>,
    /// Per channel `(lower, upper)` when bands were computed.
    pub band: Option<Vec<(Vec<f64>, Vec<f64>)>>,
}

/// `int |h|^2 dx` (Schrodinger) or `int u dx` (Burgers) per reference time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservedCurve {
    pub t: Vec<f64>,
    pub model: Vec<f64>,
    pub reference: Vec<f64>,
}

impl ConservedCurve {
    /// Max minus min of the model curve.
    pub fn model_drift(&self) -> f64 {
        let max = self.model.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.model.iter().copied().fold(f64::INFINITY, f64::min);
        max - min
    }
}

/// Initial-slice samples as seen before any smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialSamples {
    pub x: Vec<f64>,
    pub channels: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingReport {
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
    /// Final kernel per channel.
    pub kernels: Vec<KernelSpec>,
    /// Inducing-point selections (sparse smoothing only).
    pub selections: Vec<IpSelectionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyReport {
    pub plus: Model,
    pub minus: Model,
    pub seconds: f64,
    /// Fraction of reference values at `t = 0` (all channels, validation
    /// x-grid) inside the band.
    pub coverage_t0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub reference: f64,
    pub smoothing: f64,
    pub training: f64,
    pub uncertainty: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub status: RunStatus,
    pub validation_mse: f64,
    pub final_loss: Option<LossBreakdown>,
    pub iterations: usize,
    pub slices: Vec<SliceExtract>,
    pub conserved: ConservedCurve,
    pub history: Vec<HistoryRow>,
    pub initial_samples: InitialSamples,
    pub smoothing: Option<SmoothingReport>,
    pub uncertainty: Option<UncertaintyReport>,
    pub model: Model,
    pub timings: Timings,
}

impl ExperimentReport {
    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }
}

fn smooth(cfg: &ExperimentConfig, x: &[f64], channels: &[Vec<f64>]) -> Result<Option<(SmoothedBoundary, Vec<IpSelection>)>> {
    Ok(match &cfg.smoothing {
        Smoothing::None => None,
        Smoothing::Gp { kernel, restarts } => Some((smooth_boundary(x, channels, *kernel, *restarts, cfg.seed)?, Vec::new())),
        Smoothing::Sgp {
            kernel,
            restarts,
            n0,
            selection,
        } => {
            let base = IpSelectConfig {
                n0: *n0,
                budget: x.len(),
                rho: 0.0,
                seed: cfg.seed,
                restarts: *restarts,
            };
            Some(match selection {
                IpBudget::Target { counts } => sparse_smooth_boundary_target(x, channels, counts, &base, *kernel)?,
                IpBudget::Threshold { budgets, rho } => {
                    let configs: Vec<IpSelectConfig> = budgets
                        .iter()
                        .enumerate()
                        .map(|(c, &budget)| IpSelectConfig {
                            budget,
                            rho: *rho,
                            seed: cfg.seed.wrapping_add(c as u64),
                            ..base
                        })
                        .collect();
                    sparse_smooth_boundary(x, channels, &configs, *kernel)?
                }
            })
        }
    })
}

/// Training samples for `cfg` and the smoothing applied to them.
pub fn prepare_samples(cfg: &ExperimentConfig) -> Result<(SampleSet, InitialSamples, Option<SmoothingReport>)> {
    let problem = cfg.problem_spec();
    let raw = sample(&problem, &cfg.sampling_config(), &cfg.noise_spec())?;
    let (x, channels) = raw.initial_slice();
    let initial = InitialSamples {
        x: x.clone(),
        channels: channels.clone(),
    };
    match smooth(cfg, &x, &channels)? {
        None => Ok((raw, initial, None)),
        Some((s, selections)) => {
            let samples = raw.with_initial_targets(&s.mean, Some(&s.std));
            let report = SmoothingReport {
                kernels: s.models.iter().map(|m| m.kernel).collect(),
                selections: selections.iter().map(IpSelection::record).collect(),
                mean: s.mean,
                std: s.std,
            };
            Ok((samples, initial, Some(report)))
        }
    }
}

/// Channel-major values of a row-major grid field at time index `it`.
fn grid_row(field: &[Vec<f64>], nx: usize, it: usize, channels: usize) -> Vec<Vec<f64>> {
    (0..channels)
        .map(|c| (0..nx).map(|ix| field[it * nx + ix][c]).collect())
        .collect()
}

fn reference_row(reference: &ReferenceSolution, it: usize) -> Vec<Vec<f64>> {
    (0..reference.channels())
        .map(|c| (0..reference.nx()).map(|ix| reference.at(it, ix)[c]).collect())
        .collect()
}

fn slice_integral(kind: ProblemKind, row: &[Vec<f64>], dx: f64) -> f64 {
    match kind {
        ProblemKind::Schrodinger => {
            let density: Vec<f64> = (0..row[0].len()).map(|i| row[0][i].powi(2) + row[1][i].powi(2)).collect();
            trapezoid(&density, dx, true)
        }
        ProblemKind::Burgers => trapezoid(&row[0], dx, false),
    }
}

fn conserved_curve(kind: ProblemKind, field: &[Vec<f64>], reference: &ReferenceSolution) -> ConservedCurve {
    let dx = reference.x[1] - reference.x[0];
    let (mut model, mut refv) = (Vec::new(), Vec::new());
    for it in 0..reference.nt() {
        model.push(slice_integral(kind, &grid_row(field, reference.nx(), it, reference.channels()), dx));
        refv.push(slice_integral(kind, &reference_row(reference, it), dx));
    }
    ConservedCurve {
        t: reference.t.clone(),
        model,
        reference: refv,
    }
}

/// Model values along the reference x-grid at reference time index `it`.
fn model_row(model: &Model, reference: &ReferenceSolution, it: usize) -> Result<Vec<Vec<f64>>> {
    let t = reference.t[it];
    let pts: Vec<[f64; 2]> = reference.x.iter().map(|&x| [x, t]).collect();
    let vals = model.values(&pts)?;
    Ok((0..model.outputs()).map(|c| vals.iter().map(|v| v[c]).collect()).collect())
}

fn band_row(models: [&Model; 3], reference: &ReferenceSolution, it: usize) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let rows = models
        .iter()
        .map(|m| model_row(m, reference, it))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..rows[0].len())
        .map(|c| {
            let n = rows[0][c].len();
            let lo = (0..n).map(|i| rows.iter().map(|r| r[c][i]).fold(f64::INFINITY, f64::min)).collect();
            let hi = (0..n).map(|i| rows.iter().map(|r| r[c][i]).fold(f64::NEG_INFINITY, f64::max)).collect();
            (lo, hi)
        })
        .collect())
}

/// Fraction of reference nodes inside the band; complex fields are judged
/// on `|h|`.
fn coverage(band: &[(Vec<f64>, Vec<f64>)], reference: &[Vec<f64>]) -> f64 {
    let (lo, hi, r) = if band.len() == 2 {
        let (lo, hi) = band_with_modulus(band).pop().expect("modulus band");
        (lo, hi, with_modulus(reference).pop().expect("modulus"))
    } else {
        (band[0].0.clone(), band[0].1.clone(), reference[0].clone())
    };
    let inside = r.iter().zip(lo.iter().zip(&hi)).filter(|(v, (l, h))| *v >= *l && *v <= *h).count();
    inside as f64 / r.len() as f64
}

fn extract(
    model: &Model,
    bands: Option<[&Model; 3]>,
    reference: &ReferenceSolution,
    t: f64,
) -> Result<SliceExtract> {
    let d = reference.meta.domain;
    if !(t >= d.t_min && t <= d.t_max) {
        return Err(Error::Config(format!("timestamp {t} outside [{}, {}]", d.t_min, d.t_max)));
    }
    let it = reference.nearest_time(t);
    Ok(SliceExtract {
        requested_t: t,
        t: reference.t[it],
        x: reference.x.clone(),
        model: model_row(model, reference, it)?,
        reference: reference_row(reference, it),
        band: bands.map(|b| band_row(b, reference, it)).transpose()?,
    })
}

/// Runs one experiment. Training divergence is not an error: the report
/// carries the failure flag and the last finite parameters.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let start = Instant::now();
    let problem = cfg.problem_spec();
    let reference = cached_reference(&problem, cfg.validation, &cfg.cache_dir)?;
    let t_reference = start.elapsed().as_secs_f64();

    let clock = Instant::now();
    let (samples, initial_samples, smoothing) = prepare_samples(cfg)?;
    let t_smoothing = clock.elapsed().as_secs_f64();

    let loss = cfg.loss_spec();
    let task = Task {
        problem: &problem,
        samples: &samples,
        loss: &loss,
        reference: Some(&reference),
    };
    let net = cfg.network_config()?;
    let clock = Instant::now();
    let (model, status, history, final_loss, iterations) = match train(&task, &net, &cfg.subdomains(), &cfg.train_config()) {
        Ok(t) => (t.model, RunStatus::Completed, t.history, Some(t.losses), t.iterations),
        Err(Error::Divergence {
            iteration,
            loss,
            last_finite,
        }) => {
            log::warn!("training diverged at iteration {iteration} (loss {loss})");
            let mut m = Model::init(&problem, &net, &cfg.subdomains(), cfg.seed)?;
            m.set_flat(&last_finite)?;
            let status = RunStatus::Diverged {
                iteration,
                loss: loss.is_finite().then_some(loss),
            };
            let last = Assembly::new(&problem, &samples, &cfg.loss_spec(), &m.configs, &m.cuts)?
                .evaluate_model(&m)
                .ok();
            (m, status, Vec::new(), last, iteration)
        }
        Err(e) => return Err(e),
    };
    let t_training = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut status = status;
    let mut band_models = None;
    if let (Some(rc), RunStatus::Completed) = (cfg.retrain_config(), status) {
        let base = crate::training::TrainedModel {
            model: model.clone(),
            losses: final_loss.expect("completed run has a loss"),
            history: Vec::new(),
            seed: cfg.seed,
            iterations,
            wall_seconds: t_training,
        };
        match uncertainty_retrain(&task, &base, &rc) {
            Ok((plus, minus)) => band_models = Some((plus.model, minus.model)),
            Err(Error::Divergence { iteration, loss, .. }) => {
                log::warn!("band retraining diverged at iteration {iteration}");
                status = RunStatus::Diverged {
                    iteration,
                    loss: loss.is_finite().then_some(loss),
                };
            }
            Err(e) => return Err(e),
        }
    }
    let t_uncertainty = clock.elapsed().as_secs_f64();

    let field = field_on_grid(&model, &reference)?;
    let mse = validation_mse(&field, &reference)?;
    let bands = band_models.as_ref().map(|(p, m)| [&model, p, m]);
    let slices = cfg
        .timestamps
        .iter()
        .map(|&t| extract(&model, bands, &reference, t))
        .collect::<Result<Vec<_>>>()?;
    let uncertainty = match (&band_models, bands) {
        (Some((plus, minus)), Some(b)) => Some(UncertaintyReport {
            coverage_t0: coverage(&band_row(b, &reference, 0)?, &reference_row(&reference, 0)),
            plus: plus.clone(),
            minus: minus.clone(),
            seconds: t_uncertainty,
        }),
        _ => None,
    };
    let report = ExperimentReport {
        schema_version: super::config::SCHEMA_VERSION,
        config: cfg.clone(),
        seed: cfg.seed,
        status,
        validation_mse: mse,
        final_loss,
        iterations,
        slices,
        conserved: conserved_curve(problem.kind, &field, &reference),
        history,
        initial_samples,
        smoothing,
        uncertainty,
        model,
        timings: Timings {
            reference: t_reference,
            smoothing: t_smoothing,
            training: t_training,
            uncertainty: t_uncertainty,
            total: start.elapsed().as_secs_f64(),
        },
    };
    if let Some(dir) = &cfg.output_dir {
        write_report_dir(&report, &field, &reference, dir)?;
    }
    Ok(report)
}

/// Row-major `(t, x)` field as a reference-format grid.
fn field_grid(kind: ProblemKind, field: &[Vec<f64>], reference: &ReferenceSolution) -> ReferenceSolution {
    let complex = field.first().map(|f| f.len() == 2).unwrap_or(false);
    ReferenceSolution {
        x: reference.x.clone(),
        t: reference.t.clone(),
        u: field.iter().map(|f| f[0]).collect(),
        v: complex.then(|| field.iter().map(|f| f[1]).collect()),
        meta: ReferenceMeta {
            oracle: "model".into(),
            kind,
            domain: reference.meta.domain,
            nx: reference.nx(),
            nt: reference.nt(),
            convergence_residual: 0.0,
            resolution: 0,
        },
    }
}

/// Persists everything needed to recompute the MSE and replot the run.
pub fn write_report_dir(
    report: &ExperimentReport,
    field: &[Vec<f64>],
    reference: &ReferenceSolution,
    dir: &Path,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.json"), report.config.to_json()?)?;
    fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    write_history(&report.history, &dir.join("history.csv"))?;
    save_model(&report.model, report.config.problem, report.seed, &dir.join("model.json"))?;
    field_grid(report.config.problem, field, reference).write(&dir.join("field.csv"))?;
    reference.write(&dir.join("reference.csv"))?;
    if let Some(s) = &report.smoothing {
        let mut w = BufWriter::new(File::create(dir.join("smoothed_boundary.csv"))?);
        let header: Vec<String> = (0..s.mean.len()).map(|c| format!("mean_{c},std_{c}")).collect();
        writeln!(w, "x,{}", header.join(","))?;
        for (i, x) in report.initial_samples.x.iter().enumerate() {
            write!(w, "{x}")?;
            for c in 0..s.mean.len() {
                write!(w, ",{},{}", s.mean[c][i], s.std[c][i])?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        for (c, sel) in s.selections.iter().enumerate() {
            fs::write(dir.join(format!("ips_{c}.json")), serde_json::to_string_pretty(sel)?)?;
        }
    }
    let times: Vec<f64> = report.slices.iter().map(|s| s.requested_t).collect();
    export_slices(report, &times, &dir.join("slices"))?;
    Ok(())
}

pub fn read_report(dir: &Path) -> Result<ExperimentReport> {
    let text = fs::read_to_string(dir.join("report.json"))?;
    Ok(serde_json::from_str(&text)?)
}

/// Validation MSE from the persisted field grid and reference.
pub fn recompute_mse(dir: &Path) -> Result<f64> {
    let field = ReferenceSolution::read(&dir.join("field.csv"))?;
    let reference = ReferenceSolution::read(&dir.join("reference.csv"))?;
    let values: Vec<Vec<f64>> = (0..field.nt())
        .flat_map(|it| (0..field.nx()).map(move |ix| (it, ix)))
        .map(|(it, ix)| field.at(it, ix))
        .collect();
    validation_mse(&values, &reference)
}

fn column_names(outputs: usize) -> Vec<&'static str> {
    if outputs == 2 {
        vec!["u", "v", "h"]
    } else {
        vec!["u"]
    }
}

/// Adds `|h|` after the `(u, v)` channels.
fn with_modulus(channels: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = channels.to_vec();
    if channels.len() == 2 {
        out.push(channels[0].iter().zip(&channels[1]).map(|(u, v)| u.hypot(*v)).collect());
    }
    out
}

/// Writes `slice_t<t>.csv` per timestamp with columns
/// `x,<value columns>[,<lo>,<hi> per column][,<reference columns>]`, plus
/// `samples_t0.csv` with the raw initial samples.
pub fn export_slices(report: &ExperimentReport, timestamps: &[f64], dir: &Path) -> Result<Vec<PathBuf>> {
    let problem = report.config.problem_spec();
    let reference = cached_reference(&problem, report.config.validation, &report.config.cache_dir)?;
    fs::create_dir_all(dir)?;
    let bands = report.uncertainty.as_ref().map(|u| [&report.model, &u.plus, &u.minus]);
    let names = column_names(problem.outputs());
    let mut written = Vec::new();
    for &t in timestamps {
        let s = extract(&report.model, bands, &reference, t)?;
        let path = dir.join(format!("slice_t{:.4}.csv", s.t));
        let mut w = BufWriter::new(File::create(&path)?);
        let mut header = vec!["x".to_string()];
        header.extend(names.iter().map(|n| n.to_string()));
        let band = s.band.as_ref().map(|b| band_with_modulus(b));
        if band.is_some() {
            for n in &names {
                header.push(format!("{n}_lo"));
                header.push(format!("{n}_hi"));
            }
        }
        header.extend(names.iter().map(|n| format!("{n}_ref")));
        writeln!(w, "{}", header.join(","))?;
        let model = with_modulus(&s.model);
        let refv = with_modulus(&s.reference);
        for i in 0..s.x.len() {
            let mut row = vec![s.x[i]];
            row.extend(model.iter().map(|c| c[i]));
            if let Some(b) = &band {
                for (lo, hi) in b {
                    row.push(lo[i]);
                    row.push(hi[i]);
                }
            }
            row.extend(refv.iter().map(|c| c[i]));
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        w.flush()?;
        written.push(path);
    }
    if timestamps.iter().any(|&t| reference.nearest_time(t) == 0) {
        let path = dir.join("samples_t0.csv");
        let mut w = BufWriter::new(File::create(&path)?);
        let samples = &report.initial_samples;
        let names: Vec<&str> = names.iter().take(samples.channels.len()).copied().collect();
        writeln!(w, "x,{}", names.join(","))?;
        for (i, x) in samples.x.iter().enumerate() {
            let cells: Vec<String> = samples.channels.iter().map(|c| format!("{:e}", c[i])).collect();
            writeln!(w, "{x:e},{}", cells.join(","))?;
        }
        w.flush()?;
        written.push(path);
    }
    Ok(written)
}

/// Bands per channel plus a band for `|h|` from the three models' moduli.
fn band_with_modulus(band: &[(Vec<f64>, Vec<f64>)]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut out = band.to_vec();
    if band.len() == 2 {
        // the modulus range over the box [u_lo, u_hi] x [v_lo, v_hi]
        let n = band[0].0.len();
        let (mut lo, mut hi) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let (ul, uh) = (band[0].0[i], band[0].1[i]);
            let (vl, vh) = (band[1].0[i], band[1].1[i]);
            let nearest = |l: f64, h: f64| if l > 0.0 { l } else if h < 0.0 { h } else { 0.0 };
            let farthest = |l: f64, h: f64| if l.abs() > h.abs() { l } else { h };
            lo.push(nearest(ul, uh).hypot(nearest(vl, vh)));
            hi.push(farthest(ul, uh).hypot(farthest(vl, vh)));
        }
        out.push((lo, hi));
    }
    out
}
