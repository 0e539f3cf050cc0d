//! Loss assembly, optimisation, domain decomposition and ±1σ retraining.

mod assembly;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use assembly::{colehopf_loss_on_grid, Assembly};

use crate::diffnet::{init_params, JetSpec, JetTrace, NetworkConfig, Parameters};
use crate::error::{Error, Result};
use crate::optim::{Adam, Lbfgs, LbfgsStatus};
use crate::pdes::{
    BoundarySample, DataSample, ProblemKind, ProblemSpec, ReferenceSolution, SampleSet,
};

/// Penalty weights of the composite loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub bc: f64,
    pub pde: f64,
    pub data: f64,
    pub interface: f64,
    pub conservation: f64,
    pub colehopf: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            bc: 1.0,
            pde: 1.0,
            data: 1.0,
            interface: 1.0,
            conservation: 1.0,
            colehopf: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.bc, self.pde, self.data, self.interface, self.conservation, self.colehopf];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config(format!("loss weights must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }
}

/// Timeslice grid for the conservation loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConservationGrid {
    pub slices: usize,
    pub points: usize,
    /// Square each point's `u u_t + v v_t` instead of the slice mean.
    pub per_point_square: bool,
}

impl Default for ConservationGrid {
    fn default() -> Self {
        Self {
            slices: 21,
            points: 101,
            per_point_square: false,
        }
    }
}

/// Uniform `(x, t)` grid for the Cole-Hopf loss, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColeHopfGrid {
    pub nx: usize,
    pub nt: usize,
}

impl Default for ColeHopfGrid {
    fn default() -> Self {
        Self { nx: 64, nt: 32 }
    }
}

/// Which terms enter the loss and how strongly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub weights: LossWeights,
    /// Points per interface for the continuity term.
    pub interface_points: usize,
    pub conservation: Option<ConservationGrid>,
    pub colehopf: Option<ColeHopfGrid>,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            interface_points: 50,
            conservation: None,
            colehopf: None,
        }
    }
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.interface_points == 0 {
            return Err(Error::Config("interface_points must be positive".into()));
        }
        if let Some(g) = self.conservation {
            if g.slices == 0 || g.points == 0 {
                return Err(Error::Config("conservation grid must be non-empty".into()));
            }
        }
        if let Some(g) = self.colehopf {
            if g.nx < 5 || g.nt < 5 {
                return Err(Error::Config(format!(
                    "Cole-Hopf grid needs at least 5 x 5 nodes, got {} x {}",
                    g.nx, g.nt
                )));
            }
        }
        Ok(())
    }

    /// Only the boundary term.
    pub fn boundary_only() -> Self {
        Self::only(|w| w.bc = 1.0)
    }

    fn only(set: impl FnOnce(&mut LossWeights)) -> Self {
        let mut weights = LossWeights {
            bc: 0.0,
            pde: 0.0,
            data: 0.0,
            interface: 0.0,
            conservation: 0.0,
            colehopf: 0.0,
        };
        set(&mut weights);
        Self {
            weights,
            ..Self::default()
        }
    }
}

/// Spatial cuts splitting the domain into subdomains, one network each.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubdomainSpec {
    pub cuts: Vec<f64>,
}

impl SubdomainSpec {
    pub fn single() -> Self {
        Self::default()
    }

    /// `n` equal-width subdomains of the problem's x-range.
    pub fn equal(problem: &ProblemSpec, n: usize) -> Self {
        let d = problem.domain;
        Self {
            cuts: (1..n.max(1))
                .map(|i| d.x_min + d.width() * i as f64 / n as f64)
                .collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.cuts.len() + 1
    }

    pub fn validate(&self, problem: &ProblemSpec) -> Result<()> {
        let d = problem.domain;
        let sorted = self.cuts.windows(2).all(|w| w[0] < w[1]);
        if !sorted || self.cuts.iter().any(|&c| !(c > d.x_min && c < d.x_max)) {
            return Err(Error::Config(format!(
                "subdomain cuts must be sorted and strictly inside ({}, {}): {:?}",
                d.x_min, d.x_max, self.cuts
            )));
        }
        Ok(())
    }

    /// `[x_lo, x_hi]` of every subdomain.
    pub fn intervals(&self, problem: &ProblemSpec) -> Vec<[f64; 2]> {
        let d = problem.domain;
        let mut edges = vec![d.x_min];
        edges.extend(&self.cuts);
        edges.push(d.x_max);
        edges.windows(2).map(|w| [w[0], w[1]]).collect()
    }
}

/// One network per subdomain; inputs of each network are mapped from its
/// own subdomain onto `[-1, 1]^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub configs: Vec<NetworkConfig>,
    pub cuts: Vec<f64>,
    pub params: Vec<Parameters>,
}

impl Model {
    /// Fresh Glorot initialisation; network `i` draws from `seed + i`.
    pub fn init(
        problem: &ProblemSpec,
        net: &NetworkConfig,
        subdomains: &SubdomainSpec,
        seed: u64,
    ) -> Result<Self> {
        subdomains.validate(problem)?;
        net.validate()?;
        if net.input_dim != 2 || net.output_dim != problem.outputs() {
            return Err(Error::Config(format!(
                "network must map (x, t) to {} outputs",
                problem.outputs()
            )));
        }
        let d = problem.domain;
        let t_hi = if d.t_max > d.t_min { d.t_max } else { d.t_min + 1.0 };
        let configs = subdomains
            .intervals(problem)
            .into_iter()
            .map(|x| net.clone().with_input_bounds(vec![x, [d.t_min, t_hi]]))
            .collect::<Result<Vec<_>>>()?;
        let params = configs
            .iter()
            .enumerate()
            .map(|(i, c)| init_params(c, seed.wrapping_add(i as u64)))
            .collect();
        Ok(Self {
            configs,
            cuts: subdomains.cuts.clone(),
            params,
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(Parameters::len).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.0.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.num_params() {
            return Err(Error::Shape("flat parameter length".into()));
        }
        let mut at = 0;
        for p in &mut self.params {
            let n = p.len();
            p.0.copy_from_slice(&theta[at..at + n]);
            at += n;
        }
        Ok(())
    }

    pub fn owner(&self, x: f64) -> usize {
        self.cuts.iter().filter(|&&c| x >= c).count()
    }

    pub fn outputs(&self) -> usize {
        self.configs[0].output_dim
    }

    /// Network outputs at every point, routed to the owning subdomain.
    pub fn values(&self, points: &[[f64; 2]]) -> Result<Vec<Vec<f64>>> {
        let nets = self.configs.len();
        let mut flat: Vec<Vec<f64>> = vec![Vec::new(); nets];
        let mut slot = Vec::with_capacity(points.len());
        for p in points {
            let n = self.owner(p[0]);
            slot.push((n, flat[n].len() / 2));
            flat[n].extend_from_slice(p);
        }
        let mut traces = Vec::with_capacity(nets);
        for n in 0..nets {
            traces.push(if flat[n].is_empty() {
                None
            } else {
                Some(JetTrace::forward(&self.configs[n], &self.params[n], &flat[n], &JetSpec::values())?)
            });
        }
        Ok(slot
            .into_iter()
            .map(|(n, i)| {
                let out = traces[n].as_ref().expect("non-empty batch").output();
                (0..self.outputs()).map(|o| out.value(i, o)).collect()
            })
            .collect())
    }

    /// Values plus `d/dx` and `d/dt` at every point: `[value, d_x, d_t]` per output.
    pub fn gradients(&self, points: &[[f64; 2]]) -> Result<Vec<Vec<[f64; 3]>>> {
        use crate::pdes::{T, X};
        let spec = JetSpec::new(vec![X, T], vec![]);
        points
            .iter()
            .map(|p| {
                let n = self.owner(p[0]);
                let tr = JetTrace::forward(&self.configs[n], &self.params[n], p, &spec)?;
                let j = tr.output();
                Ok((0..self.outputs())
                    .map(|o| [j.value(0, o), j.d1(X, 0, o), j.d1(T, 0, o)])
                    .collect())
            })
            .collect()
    }
}

/// Unweighted loss terms and their weighted total.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub bc: f64,
    pub pde: f64,
    pub data: f64,
    pub interface: f64,
    pub conservation: f64,
    pub colehopf: f64,
}

/// Optimiser schedule: Adam, then optional L-BFGS refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam_steps: usize,
    pub learning_rate: f64,
    pub lbfgs_steps: usize,
    pub lbfgs_memory: usize,
    /// History row (with validation MSE) every this many iterations.
    pub log_every: usize,
    pub seed: u64,
    /// Abort when the loss exceeds this or stops being finite.
    pub divergence_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam_steps: 30_000,
            learning_rate: 1e-3,
            lbfgs_steps: 5_000,
            lbfgs_memory: 50,
            log_every: 500,
            seed: 0,
            divergence_threshold: 1e6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.log_every == 0 || self.lbfgs_memory == 0 {
            return Err(Error::Config("log_every and lbfgs_memory must be positive".into()));
        }
        Ok(())
    }

    pub fn iterations(&self) -> usize {
        self.adam_steps + self.lbfgs_steps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub loss: LossBreakdown,
    pub mse_validation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model: Model,
    pub losses: LossBreakdown,
    pub history: Vec<HistoryRow>,
    pub seed: u64,
    pub iterations: usize,
    pub wall_seconds: f64,
}

/// Everything a training run is fitted against.
#[derive(Debug, Clone, Copy)]
pub struct Task<'a> {
    pub problem: &'a ProblemSpec,
    pub samples: &'a SampleSet,
    pub loss: &'a LossSpec,
    /// Validation oracle for the history; optional.
    pub reference: Option<&'a ReferenceSolution>,
}

fn single_net(model: &Model, what: &str) -> Result<()> {
    if model.configs.is_empty() {
        return Err(Error::Config(format!("{what}: model has no networks")));
    }
    Ok(())
}

fn term_only(problem: &ProblemSpec, model: &Model, samples: &SampleSet, spec: LossSpec) -> Result<LossBreakdown> {
    single_net(model, "loss")?;
    Assembly::new(problem, samples, &spec, &model.configs, &model.cuts)?.evaluate_model(model)
}

/// Mean squared constraint violation over the boundary samples.
pub fn loss_bc(problem: &ProblemSpec, model: &Model, boundary: &[BoundarySample]) -> Result<f64> {
    if boundary.is_empty() {
        return Err(Error::Config("boundary set is empty".into()));
    }
    let samples = SampleSet {
        boundary: boundary.to_vec(),
        ..Default::default()
    };
    Ok(term_only(problem, model, &samples, LossSpec::boundary_only())?.bc)
}

/// Mean squared PDE residual norm over the collocation points.
pub fn loss_pde(problem: &ProblemSpec, model: &Model, collocation: &[[f64; 2]]) -> Result<f64> {
    if collocation.is_empty() {
        return Err(Error::Config("collocation set is empty".into()));
    }
    let samples = SampleSet {
        collocation: collocation.to_vec(),
        ..Default::default()
    };
    Ok(term_only(problem, model, &samples, LossSpec::only(|w| w.pde = 1.0))?.pde)
}

/// Mean squared error against direct observations; zero for no data.
pub fn loss_data(problem: &ProblemSpec, model: &Model, data: &[DataSample]) -> Result<f64> {
    let samples = SampleSet {
        data: data.to_vec(),
        ..Default::default()
    };
    Ok(term_only(problem, model, &samples, LossSpec::only(|w| w.data = 1.0))?.data)
}

/// Value and x-derivative continuity across every cut, `points` uniformly
/// spaced times per interface.
pub fn loss_interface(problem: &ProblemSpec, model: &Model, points: usize) -> Result<f64> {
    if model.cuts.is_empty() {
        return Err(Error::Config("interface loss needs at least two subdomains".into()));
    }
    let mut spec = LossSpec::only(|w| w.interface = 1.0);
    spec.interface_points = points;
    Ok(term_only(problem, model, &SampleSet::default(), spec)?.interface)
}

/// Conservation loss on a timeslice grid.
pub fn loss_conservation(problem: &ProblemSpec, model: &Model, grid: ConservationGrid) -> Result<f64> {
    let mut spec = LossSpec::only(|w| w.conservation = 1.0);
    spec.conservation = Some(grid);
    Ok(term_only(problem, model, &SampleSet::default(), spec)?.conservation)
}

/// Cole-Hopf loss on a uniform grid.
pub fn loss_colehopf(problem: &ProblemSpec, model: &Model, grid: ColeHopfGrid) -> Result<f64> {
    let mut spec = LossSpec::only(|w| w.colehopf = 1.0);
    spec.colehopf = Some(grid);
    Ok(term_only(problem, model, &SampleSet::default(), spec)?.colehopf)
}

/// Mean over grid nodes of the squared error, summed over channels.
pub fn validation_mse(field: &[Vec<f64>], reference: &ReferenceSolution) -> Result<f64> {
    let n = reference.nx() * reference.nt();
    if field.len() != n {
        return Err(Error::Shape(format!(
            "field has {} nodes, reference grid has {n}",
            field.len()
        )));
    }
    let mut sum = 0.0;
    for (i, f) in field.iter().enumerate() {
        let r = reference.at(i / reference.nx(), i % reference.nx());
        if f.len() != r.len() {
            return Err(Error::Shape("field and reference channel counts differ".into()));
        }
        sum += f.iter().zip(&r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(sum / n as f64)
}

/// Model evaluated on the reference grid (row-major `t` then `x`).
pub fn field_on_grid(model: &Model, reference: &ReferenceSolution) -> Result<Vec<Vec<f64>>> {
    let points: Vec<[f64; 2]> = reference
        .t
        .iter()
        .flat_map(|&t| reference.x.iter().map(move |&x| [x, t]))
        .collect();
    model.values(&points)
}

pub fn model_mse(model: &Model, reference: &ReferenceSolution) -> Result<f64> {
    validation_mse(&field_on_grid(model, reference)?, reference)
}

/// Fresh network(s) trained on `task`.
pub fn train(
    task: &Task<'_>,
    net: &NetworkConfig,
    subdomains: &SubdomainSpec,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    let model = Model::init(task.problem, net, subdomains, cfg.seed)?;
    train_from(task, model, cfg)
}

/// Continues training from `model` (warm start).
pub fn train_from(task: &Task<'_>, mut model: Model, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let start = Instant::now();
    let asm = Assembly::new(task.problem, task.samples, task.loss, &model.configs, &model.cuts)?;
    let mut theta = model.flat();
    let mut history: Vec<HistoryRow> = Vec::new();
    let record = |history: &mut Vec<HistoryRow>, iter: usize, theta: &[f64], loss: LossBreakdown, model: &mut Model| -> Result<()> {
        let mse = match task.reference {
            Some(r) => {
                model.set_flat(theta)?;
                Some(model_mse(model, r)?)
            }
            None => None,
        };
        log::debug!("iter {iter}: loss {:.4e} mse {:?}", loss.total, mse);
        history.push(HistoryRow {
            iter,
            loss,
            mse_validation: mse,
        });
        Ok(())
    };
    let diverged = |iteration: usize, loss: f64, last: &[f64]| Error::Divergence {
        iteration,
        loss,
        last_finite: last.to_vec(),
    };
    let check = |iteration: usize, r: Result<(LossBreakdown, Vec<f64>)>, last: &[f64]| match r {
        Ok((l, g)) if l.total <= cfg.divergence_threshold => Ok((l, g)),
        Ok((l, _)) => Err(diverged(iteration, l.total, last)),
        Err(Error::NonFinite(_)) => Err(diverged(iteration, f64::NAN, last)),
        Err(e) => Err(e),
    };

    let (mut loss, mut grad) = check(0, asm.evaluate(&theta, true), &theta)?;
    record(&mut history, 0, &theta, loss, &mut model)?;
    let mut iter = 0;

    let mut adam = Adam::new(theta.len(), cfg.learning_rate);
    let mut last_good = theta.clone();
    for _ in 0..cfg.adam_steps {
        adam.step(&mut theta, &grad);
        iter += 1;
        (loss, grad) = check(iter, asm.evaluate(&theta, true), &last_good)?;
        last_good.copy_from_slice(&theta);
        if iter % cfg.log_every == 0 {
            record(&mut history, iter, &theta, loss, &mut model)?;
        }
    }

    if cfg.lbfgs_steps > 0 {
        let mut lbfgs = Lbfgs::new(cfg.lbfgs_memory);
        let mut f = loss.total;
        let mut objective = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let (l, g) = asm.evaluate(x, true)?;
            Ok((l.total, g))
        };
        for _ in 0..cfg.lbfgs_steps {
            let status = lbfgs.step(&mut objective, &mut theta, &mut f, &mut grad)?;
            if f > cfg.divergence_threshold {
                return Err(diverged(iter + 1, f, &last_good));
            }
            if !matches!(status, LbfgsStatus::Progress { .. }) {
                log::debug!("L-BFGS stopped at iteration {iter}: {status:?}");
                break;
            }
            iter += 1;
            last_good.copy_from_slice(&theta);
            if iter % cfg.log_every == 0 {
                loss = asm.evaluate(&theta, false)?.0;
                record(&mut history, iter, &theta, loss, &mut model)?;
            }
        }
        loss = asm.evaluate(&theta, false)?.0;
    }
    if history.last().map(|h| h.iter) != Some(iter) {
        record(&mut history, iter, &theta, loss, &mut model)?;
    }
    model.set_flat(&theta)?;
    Ok(TrainedModel {
        model,
        losses: loss,
        history,
        seed: cfg.seed,
        iterations: iter,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Warm-started retraining against initial targets shifted by `+sigma` and
/// `-sigma` (the sigma attached to each boundary sample).
///
/// When every attached sigma is zero the shifted problems coincide with the
/// base problem and the base model is returned for both.
pub fn uncertainty_retrain(
    task: &Task<'_>,
    base: &TrainedModel,
    cfg: &TrainConfig,
) -> Result<(TrainedModel, TrainedModel)> {
    let plus_samples = task.samples.shifted_initial(1.0);
    if plus_samples == *task.samples {
        return Ok((base.clone(), base.clone()));
    }
    let minus_samples = task.samples.shifted_initial(-1.0);
    let run = |samples: &SampleSet| {
        let t = Task {
            samples,
            ..*task
        };
        train_from(&t, base.model.clone(), cfg)
    };
    Ok((run(&plus_samples)?, run(&minus_samples)?))
}

/// Pointwise `[min, max]` per channel over several models.
pub fn band(models: &[&Model], points: &[[f64; 2]]) -> Result<Vec<Vec<[f64; 2]>>> {
    let evals = models
        .iter()
        .map(|m| m.values(points))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..points.len())
        .map(|i| {
            (0..evals[0][i].len())
                .map(|c| {
                    let vals = evals.iter().map(|e| e[i][c]);
                    let lo = vals.clone().fold(f64::INFINITY, f64::min);
                    let hi = vals.fold(f64::NEG_INFINITY, f64::max);
                    [lo, hi]
                })
                .collect()
        })
        .collect())
}

/// Writes `iter,loss_total,loss_bc,loss_pde,loss_i,loss_c,loss_ch,mse_validation`.
pub fn write_history(history: &[HistoryRow], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "iter,loss_total,loss_bc,loss_pde,loss_i,loss_c,loss_ch,mse_validation")?;
    for h in history {
        let l = &h.loss;
        let mse = h.mse_validation.map(|m| format!("{m:e}")).unwrap_or_default();
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{}",
            h.iter, l.total, l.bc, l.pde, l.interface, l.conservation, l.colehopf, mse
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Versioned JSON model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub problem: ProblemKind,
    pub seed: u64,
    pub model: Model,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

pub fn save_model(model: &Model, problem: ProblemKind, seed: u64, path: &Path) -> Result<()> {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        problem,
        seed,
        model: model.clone(),
    };
    let w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(w, &file)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let file: ModelFile = serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?;
    if file.format_version != MODEL_FORMAT_VERSION {
        return Err(Error::Config(format!(
            "model file version {} is not supported",
            file.format_version
        )));
    }
    for (c, p) in file.model.configs.iter().zip(&file.model.params) {
        p.check(c)?;
    }
    Ok(file)
}
