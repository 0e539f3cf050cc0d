//! Online inducing-point selection on a boundary slice, followed by an
//! exact GP refit on the selected subset.

use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{fit, GpModel, KernelFamily, KernelSpec, SmoothedBoundary};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IpSelectConfig {
    /// Size of the random seed subset.
    pub n0: usize,
    /// Inducing-point budget.
    pub budget: usize,
    /// Similarity threshold; a candidate is admitted when its largest noise-free
    /// covariance with the current set is below `rho`.
    pub rho: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl IpSelectConfig {
    pub fn new(budget: usize, rho: f64, seed: u64) -> Self {
        Self {
            n0: 5,
            budget,
            rho,
            seed,
            restarts: crate::gp::DEFAULT_RESTARTS,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.n0 == 0 || self.n0 > self.budget {
            return Err(Error::Config(format!(
                "need 1 <= n0 <= budget, got n0 = {}, budget = {}",
                self.n0, self.budget
            )));
        }
        if self.n0 > n {
            return Err(Error::Config(format!("n0 = {} exceeds the {n} slice points", self.n0)));
        }
        if !(self.rho >= 0.0) {
            return Err(Error::Config(format!("rho must be >= 0, got {}", self.rho)));
        }
        if self.restarts == 0 {
            return Err(Error::Config("at least one restart is required".into()));
        }
        Ok(())
    }
}

/// One streamed candidate and the decision taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Admission {
    pub candidate: usize,
    pub max_similarity: f64,
    pub admitted: bool,
}

#[derive(Debug, Clone)]
pub struct IpSelection {
    pub config: IpSelectConfig,
    pub seed_indices: Vec<usize>,
    /// Seed subset first, then admitted candidates in admission order.
    pub selected: Vec<usize>,
    pub admissions: Vec<Admission>,
    /// Hyperparameters fitted on the seed subset.
    pub seed_kernel: KernelSpec,
    /// Exact GP refitted on the selected subset.
    pub model: GpModel,
}

/// JSON form of a selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IpSelectionRecord {
    pub config: IpSelectConfig,
    pub seed_indices: Vec<usize>,
    pub selected: Vec<usize>,
    pub admissions: Vec<Admission>,
    pub seed_kernel: KernelSpec,
    pub final_kernel: KernelSpec,
}

impl IpSelection {
    pub fn record(&self) -> IpSelectionRecord {
        IpSelectionRecord {
            config: self.config,
            seed_indices: self.seed_indices.clone(),
            selected: self.selected.clone(),
            admissions: self.admissions.clone(),
            seed_kernel: self.seed_kernel,
            final_kernel: self.model.kernel,
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.record())?)?;
        Ok(())
    }

    /// Replays the admission log against `x`: every admitted candidate must
    /// have been below `rho` against the set as it stood, every rejected one
    /// at or above it. Returns the first offending log entry.
    pub fn verify(&self, x: &[f64]) -> std::result::Result<(), Admission> {
        let mut set = self.seed_indices.clone();
        for a in &self.admissions {
            let sim = max_similarity(&self.seed_kernel, x, &set, a.candidate);
            if sim != a.max_similarity || (sim < self.config.rho) != a.admitted {
                return Err(*a);
            }
            if a.admitted {
                set.push(a.candidate);
            }
        }
        if set != self.selected || set.len() > self.config.budget {
            return Err(Admission {
                candidate: usize::MAX,
                max_similarity: f64::NAN,
                admitted: false,
            });
        }
        Ok(())
    }
}

fn max_similarity(kernel: &KernelSpec, x: &[f64], set: &[usize], z: usize) -> f64 {
    set.iter()
        .map(|&j| kernel.signal(x[z] - x[j]))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// The deterministic part of selection: seed subset and streaming order.
fn seed_and_order(n: usize, cfg: &IpSelectConfig) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seed_idx = index::sample(&mut rng, n, cfg.n0).into_vec();
    let mut in_seed = vec![false; n];
    seed_idx.iter().for_each(|&i| in_seed[i] = true);
    let mut rest: Vec<usize> = (0..n).filter(|&i| !in_seed[i]).collect();
    rest.shuffle(&mut rng);
    (seed_idx, rest)
}

/// Streams `order` into `selected` under threshold `rho` and `budget`.
fn stream(
    kernel: &KernelSpec,
    x: &[f64],
    mut selected: Vec<usize>,
    order: &[usize],
    rho: f64,
    budget: usize,
) -> (Vec<usize>, Vec<Admission>) {
    let mut log = Vec::new();
    for &z in order {
        if selected.len() >= budget {
            break;
        }
        let sim = max_similarity(kernel, x, &selected, z);
        let admitted = sim < rho;
        log.push(Admission {
            candidate: z,
            max_similarity: sim,
            admitted,
        });
        if admitted {
            selected.push(z);
        }
    }
    (selected, log)
}

fn subset(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

/// Seed-subset fit, streaming admission, then a refit on the selection.
pub fn ip_select(x: &[f64], y: &[f64], cfg: &IpSelectConfig, family: KernelFamily) -> Result<IpSelection> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} inputs but {} targets", x.len(), y.len())));
    }
    cfg.validate(x.len())?;
    let (seed_idx, order) = seed_and_order(x.len(), cfg);
    let seed_model = fit(&subset(x, &seed_idx), &subset(y, &seed_idx), family, cfg.restarts, cfg.seed)?;
    let seed_kernel = seed_model.kernel;
    let (selected, admissions) = stream(&seed_kernel, x, seed_idx.clone(), &order, cfg.rho, cfg.budget);
    let model = if selected.len() == seed_idx.len() {
        seed_model
    } else {
        fit(&subset(x, &selected), &subset(y, &selected), family, cfg.restarts, cfg.seed)?
    };
    Ok(IpSelection {
        config: *cfg,
        seed_indices: seed_idx,
        selected,
        admissions,
        seed_kernel,
        model,
    })
}

/// Bisects `rho` so that the selection reaches `target` points, then runs
/// selection with budget `target`.
pub fn ip_select_target(
    x: &[f64],
    y: &[f64],
    target: usize,
    base: &IpSelectConfig,
    family: KernelFamily,
) -> Result<IpSelection> {
    if target > x.len() {
        return Err(Error::Config(format!("target {target} exceeds the {} slice points", x.len())));
    }
    let mut probe = *base;
    probe.budget = x.len().max(base.n0);
    probe.validate(x.len())?;
    let (seed_idx, order) = seed_and_order(x.len(), &probe);
    let seed_kernel = fit(&subset(x, &seed_idx), &subset(y, &seed_idx), family, base.restarts, base.seed)?.kernel;
    let count = |rho: f64| stream(&seed_kernel, x, seed_idx.clone(), &order, rho, x.len()).0.len();
    // signal covariance never exceeds A, so rho just above A admits everything
    let (mut lo, mut hi) = (0.0, seed_kernel.amplitude * (1.0 + 1e-9) + f64::MIN_POSITIVE);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if count(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut cfg = *base;
    cfg.rho = hi;
    cfg.budget = target.max(base.n0);
    ip_select(x, y, &cfg, family)
}

/// Per-channel selection and prediction over every original slice point.
pub fn sparse_smooth_boundary(
    x: &[f64],
    channels: &[Vec<f64>],
    configs: &[IpSelectConfig],
    family: KernelFamily,
) -> Result<(SmoothedBoundary, Vec<IpSelection>)> {
    if configs.len() != channels.len() {
        return Err(Error::Shape(format!(
            "{} channels but {} selection configs",
            channels.len(),
            configs.len()
        )));
    }
    let selections = channels
        .iter()
        .zip(configs)
        .map(|(y, cfg)| ip_select(x, y, cfg, family))
        .collect::<Result<Vec<_>>>()?;
    let models = selections.iter().map(|s| s.model.clone()).collect();
    Ok((SmoothedBoundary::from_models(x.to_vec(), models), selections))
}

/// As [`sparse_smooth_boundary`] with a target count per channel.
pub fn sparse_smooth_boundary_target(
    x: &[f64],
    channels: &[Vec<f64>],
    targets: &[usize],
    base: &IpSelectConfig,
    family: KernelFamily,
) -> Result<(SmoothedBoundary, Vec<IpSelection>)> {
    if targets.len() != channels.len() {
        return Err(Error::Shape(format!("{} channels but {} targets", channels.len(), targets.len())));
    }
    let selections = channels
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(c, (y, &t))| {
            let mut cfg = *base;
            cfg.seed = base.seed.wrapping_add(c as u64);
            ip_select_target(x, y, t, &cfg, family)
        })
        .collect::<Result<Vec<_>>>()?;
    let models = selections.iter().map(|s| s.model.clone()).collect();
    Ok((SmoothedBoundary::from_models(x.to_vec(), models), selections))
}
