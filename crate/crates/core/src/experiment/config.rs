//! Experiment configuration: a versioned JSON document whose missing keys
//! fall back to per-problem benchmark defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diffnet::NetworkConfig;
use crate::error::{Error, Result};
use crate::gp::{KernelFamily, DEFAULT_RESTARTS};
use crate::pdes::{NoiseSpec, ProblemKind, ProblemSpec, SamplingConfig};
use crate::sgp::IpSelectConfig;
use crate::training::{ColeHopfGrid, ConservationGrid, LossSpec, LossWeights, SubdomainSpec, TrainConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Which preset fills the defaults.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    /// Benchmark sizes: 6x70 / 4x40 networks, 20 000 / 10 000 collocation points.
    Full,
    /// Reduced networks and collocation sets that train in a few minutes on one core.
    Fast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub theta_u: u8,
    pub theta_v: u8,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum IpBudget {
    /// Exact inducing-point count per channel, threshold found by bisection.
    Target { counts: Vec<usize> },
    /// Fixed threshold with a budget per channel.
    Threshold { budgets: Vec<usize>, rho: f64 },
}

fn rbf() -> KernelFamily {
    KernelFamily::Rbf
}

fn restarts() -> usize {
    DEFAULT_RESTARTS
}

fn n0() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum Smoothing {
    None,
    Gp {
        #[serde(default = "rbf")]
        kernel: KernelFamily,
        #[serde(default = "restarts")]
        restarts: usize,
    },
    Sgp {
        #[serde(default = "rbf")]
        kernel: KernelFamily,
        #[serde(default = "restarts")]
        restarts: usize,
        #[serde(default = "n0")]
        n0: usize,
        selection: IpBudget,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regularizers {
    /// Equal-width spatial subdomains; 1 is a plain PINN.
    pub subdomains: usize,
    pub interface_points: usize,
    pub conservation: Option<ConservationGrid>,
    pub colehopf: Option<ColeHopfGrid>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkShape {
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingCounts {
    pub n_initial: usize,
    pub n_boundary_times: usize,
    pub n_collocation: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub adam_steps: usize,
    pub learning_rate: f64,
    pub lbfgs_steps: usize,
    pub lbfgs_memory: usize,
    pub log_every: usize,
    pub divergence_threshold: f64,
}

/// Retraining budget for the +-1 sigma bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UncertaintySchedule {
    pub adam_steps: usize,
    pub lbfgs_steps: usize,
}

impl Default for UncertaintySchedule {
    fn default() -> Self {
        Self {
            adam_steps: 0,
            lbfgs_steps: 1_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationGrid {
    pub nx: usize,
    pub nt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub problem: ProblemKind,
    pub tier: Tier,
    /// Master seed for sampling, noise, initialisation and GP restarts.
    pub seed: u64,
    pub noise: NoiseConfig,
    pub smoothing: Smoothing,
    pub regularizers: Regularizers,
    pub network: NetworkShape,
    pub sampling: SamplingCounts,
    pub training: Schedule,
    pub weights: LossWeights,
    pub validation: ValidationGrid,
    pub uncertainty: Option<UncertaintySchedule>,
    /// Times of the stored field extracts.
    pub timestamps: Vec<f64>,
    pub output_dir: Option<PathBuf>,
    pub cache_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn defaults(problem: ProblemKind, tier: Tier) -> Self {
        let (shape, n_collocation, schedule) = match (problem, tier) {
            (ProblemKind::Schrodinger, Tier::Full) => ((6, 70), 20_000, (30_000, 5_000)),
            (ProblemKind::Burgers, Tier::Full) => ((4, 40), 10_000, (30_000, 5_000)),
            (ProblemKind::Schrodinger, Tier::Fast) => ((4, 24), 3_000, (500, 9_500)),
            (ProblemKind::Burgers, Tier::Fast) => ((4, 20), 5_000, (500, 2_000)),
        };
        let train = TrainConfig::default();
        let (validation, timestamps) = match problem {
            ProblemKind::Schrodinger => (ValidationGrid { nx: 256, nt: 201 }, vec![0.0, 0.39, 0.78, 1.37]),
            ProblemKind::Burgers => (ValidationGrid { nx: 256, nt: 101 }, vec![0.0, 0.25, 0.5, 1.0]),
        };
        Self {
            schema_version: SCHEMA_VERSION,
            problem,
            tier,
            seed: 0,
            noise: NoiseConfig {
                theta_u: 1,
                theta_v: 1,
                sigma: 0.0,
            },
            smoothing: Smoothing::None,
            regularizers: Regularizers {
                subdomains: 1,
                interface_points: 50,
                conservation: None,
                colehopf: None,
            },
            network: NetworkShape {
                hidden_layers: shape.0,
                hidden_width: shape.1,
            },
            sampling: SamplingCounts {
                n_initial: 50,
                n_boundary_times: 50,
                n_collocation,
            },
            training: Schedule {
                adam_steps: schedule.0,
                learning_rate: train.learning_rate,
                lbfgs_steps: schedule.1,
                lbfgs_memory: train.lbfgs_memory,
                log_every: train.log_every,
                divergence_threshold: train.divergence_threshold,
            },
            weights: LossWeights::default(),
            validation,
            uncertainty: None,
            timestamps,
            output_dir: None,
            cache_dir: PathBuf::from(".pinn-gp-cache"),
        }
    }

    /// Parses a config document. `problem` and `tier` pick the defaults the
    /// document is merged over; unknown keys are rejected.
    pub fn from_json(text: &str) -> Result<Self> {
        let user: Value = serde_json::from_str(text).map_err(|e| Error::Config(format!("config is not valid JSON: {e}")))?;
        let obj = user
            .as_object()
            .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
        match obj.get("schema_version").and_then(Value::as_u64) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => return Err(Error::Config(format!("schema_version {v} is not supported (expected {SCHEMA_VERSION})"))),
            None => return Err(Error::Config("schema_version is required".into())),
        }
        let problem: ProblemKind = pick(obj, "problem")?.unwrap_or(ProblemKind::Schrodinger);
        let tier: Tier = pick(obj, "tier")?.unwrap_or(Tier::Full);
        let mut merged = serde_json::to_value(Self::defaults(problem, tier))?;
        merge(&mut merged, &user);
        let cfg: Self = serde_json::from_value(merged).map_err(|e| Error::Config(format!("schema: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        ProblemSpec::for_kind(self.problem)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported", self.schema_version));
        }
        let problem = self.problem_spec();
        let outputs = problem.outputs();
        self.noise_spec().validate()?;
        self.weights.validate()?;
        self.loss_spec().validate()?;
        self.train_config().validate()?;
        if self.regularizers.subdomains == 0 {
            return bad("at least one subdomain is required".into());
        }
        if self.regularizers.conservation.is_some() && self.problem != ProblemKind::Schrodinger {
            return bad("the conservation regularizer is defined for the Schrodinger problem only".into());
        }
        if self.regularizers.colehopf.is_some() && self.problem != ProblemKind::Burgers {
            return bad("the Cole-Hopf regularizer is defined for the Burgers problem only".into());
        }
        if self.network.hidden_layers == 0 || self.network.hidden_width == 0 {
            return bad("network needs at least one hidden layer of positive width".into());
        }
        let s = &self.sampling;
        if s.n_initial < 2 || s.n_boundary_times == 0 || s.n_collocation == 0 {
            return bad(format!("sample counts must be positive (n_initial >= 2): {s:?}"));
        }
        if self.validation.nx < 2 || self.validation.nt < 2 {
            return bad("validation grid needs at least 2 x 2 nodes".into());
        }
        let d = problem.domain;
        if let Some(t) = self.timestamps.iter().find(|t| !(**t >= d.t_min && **t <= d.t_max)) {
            return bad(format!("timestamp {t} outside [{}, {}]", d.t_min, d.t_max));
        }
        match &self.smoothing {
            Smoothing::None => {}
            Smoothing::Gp { kernel, restarts } => {
                kernel.validate()?;
                if *restarts == 0 || s.n_initial < 4 {
                    return bad("GP smoothing needs restarts >= 1 and at least 4 initial points".into());
                }
            }
            Smoothing::Sgp {
                kernel,
                restarts,
                n0,
                selection,
            } => {
                kernel.validate()?;
                let counts = match selection {
                    IpBudget::Target { counts } => counts,
                    IpBudget::Threshold { budgets, rho } => {
                        if !(*rho >= 0.0) {
                            return bad(format!("rho must be >= 0, got {rho}"));
                        }
                        budgets
                    }
                };
                if counts.len() != outputs {
                    return bad(format!("{} inducing-point counts for {outputs} channels", counts.len()));
                }
                for &c in counts {
                    IpSelectConfig {
                        n0: *n0,
                        budget: c,
                        rho: 0.0,
                        seed: 0,
                        restarts: *restarts,
                    }
                    .validate(s.n_initial)?;
                    if c > s.n_initial {
                        return bad(format!("{c} inducing points exceed the {} initial points", s.n_initial));
                    }
                }
            }
        }
        if let Some(u) = self.uncertainty {
            if u.adam_steps + u.lbfgs_steps == 0 {
                return bad("uncertainty retraining needs at least one iteration".into());
            }
        }
        Ok(())
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            theta_u: self.noise.theta_u,
            theta_v: self.noise.theta_v,
            sigma: self.noise.sigma,
            seed: self.seed,
        }
    }

    pub fn sampling_config(&self) -> SamplingConfig {
        SamplingConfig {
            n_initial: self.sampling.n_initial,
            n_boundary_times: self.sampling.n_boundary_times,
            n_collocation: self.sampling.n_collocation,
            seed: self.seed,
        }
    }

    pub fn network_config(&self) -> Result<NetworkConfig> {
        NetworkConfig::new(2, self.problem_spec().outputs(), self.network.hidden_layers, self.network.hidden_width)
    }

    pub fn subdomains(&self) -> SubdomainSpec {
        SubdomainSpec::equal(&self.problem_spec(), self.regularizers.subdomains)
    }

    pub fn loss_spec(&self) -> LossSpec {
        LossSpec {
            weights: self.weights,
            interface_points: self.regularizers.interface_points,
            conservation: self.regularizers.conservation,
            colehopf: self.regularizers.colehopf,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            adam_steps: t.adam_steps,
            learning_rate: t.learning_rate,
            lbfgs_steps: t.lbfgs_steps,
            lbfgs_memory: t.lbfgs_memory,
            log_every: t.log_every,
            seed: self.seed,
            divergence_threshold: t.divergence_threshold,
        }
    }

    /// Same optimiser settings with the retraining iteration counts.
    pub fn retrain_config(&self) -> Option<TrainConfig> {
        self.uncertainty.map(|u| TrainConfig {
            adam_steps: u.adam_steps,
            lbfgs_steps: u.lbfgs_steps,
            ..self.train_config()
        })
    }
}

fn pick<T: serde::de::DeserializeOwned>(obj: &serde_json::Map<String, Value>, key: &str) -> Result<Option<T>> {
    obj.get(key)
        .cloned()
        .map(serde_json::from_value)
        .transpose()
        .map_err(|e| Error::Config(format!("{key}: {e}")))
}

/// Recursive object merge; `over` wins on every non-object value.
fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}
