//! Boundary, initial and collocation samples, and the additive noise model.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::problem::{Domain, ProblemKind, ProblemSpec};
use crate::error::{Error, Result};

/// Additive Gaussian corruption of the initial slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Switch for noise on `u` (0 or 1).
    pub theta_u: u8,
    /// Switch for noise on `v` (0 or 1); unused for Burgers.
    pub theta_v: u8,
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn clean() -> Self {
        Self {
            theta_u: 0,
            theta_v: 0,
            sigma: 0.0,
            seed: 0,
        }
    }

    pub fn gaussian(sigma: f64, seed: u64) -> Self {
        Self {
            theta_u: 1,
            theta_v: 1,
            sigma,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config(format!("noise sigma must be >= 0, got {}", self.sigma)));
        }
        if self.theta_u > 1 || self.theta_v > 1 {
            return Err(Error::Config("noise switches must be 0 or 1".into()));
        }
        Ok(())
    }

    pub fn is_clean(&self) -> bool {
        self.sigma == 0.0 || (self.theta_u == 0 && self.theta_v == 0)
    }

    fn switch(&self, channel: usize) -> f64 {
        let on = if channel == 0 { self.theta_u } else { self.theta_v };
        f64::from(on)
    }
}

/// Standard normal draw determined by `(seed, index, channel)` alone.
pub fn noise_draw(seed: u64, index: usize, channel: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((index as u64) << 8) | channel as u64);
    rng.sample(StandardNormal)
}

/// How a boundary sample constrains the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BoundaryKind {
    /// Output values prescribed at the point; `sigma` is the optional
    /// per-channel uncertainty attached by smoothing.
    Value {
        target: Vec<f64>,
        sigma: Option<Vec<f64>>,
    },
    /// Value and x-derivative of every output must match those at `partner`.
    Periodic { partner: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySample {
    pub point: [f64; 2],
    pub kind: BoundaryKind,
}

impl BoundarySample {
    pub fn value(point: [f64; 2], target: Vec<f64>) -> Self {
        Self {
            point,
            kind: BoundaryKind::Value {
                target,
                sigma: None,
            },
        }
    }

    /// Number of scalar equalities this sample imposes.
    pub fn scalar_constraints(&self, outputs: usize) -> usize {
        match &self.kind {
            BoundaryKind::Value { .. } => outputs,
            BoundaryKind::Periodic { .. } => 2 * outputs,
        }
    }

    pub fn is_initial(&self) -> bool {
        self.point[1] == 0.0 && matches!(self.kind, BoundaryKind::Value { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSample {
    pub point: [f64; 2],
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub boundary: Vec<BoundarySample>,
    pub collocation: Vec<[f64; 2]>,
    pub data: Vec<DataSample>,
}

impl SampleSet {
    /// Initial-slice samples: `(x, targets per channel)`.
    pub fn initial_slice(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut xs = Vec::new();
        let mut channels: Vec<Vec<f64>> = Vec::new();
        for b in self.boundary.iter().filter(|b| b.is_initial()) {
            if let BoundaryKind::Value { target, .. } = &b.kind {
                if channels.is_empty() {
                    channels = vec![Vec::new(); target.len()];
                }
                xs.push(b.point[0]);
                for (c, v) in target.iter().enumerate() {
                    channels[c].push(*v);
                }
            }
        }
        (xs, channels)
    }

    /// Replaces the initial-slice targets (in order) with `means`, attaching
    /// per-channel `stds` as the uncertainty band.
    pub fn with_initial_targets(&self, means: &[Vec<f64>], stds: Option<&[Vec<f64>]>) -> Self {
        let mut out = self.clone();
        let mut i = 0;
        for b in out.boundary.iter_mut().filter(|b| b.is_initial()) {
            b.kind = BoundaryKind::Value {
                target: means.iter().map(|c| c[i]).collect(),
                sigma: stds.map(|s| s.iter().map(|c| c[i]).collect()),
            };
            i += 1;
        }
        out
    }

    /// Initial targets shifted by `sign` times their attached sigma.
    pub fn shifted_initial(&self, sign: f64) -> Self {
        let mut out = self.clone();
        for b in out.boundary.iter_mut() {
            if let BoundaryKind::Value {
                target,
                sigma: Some(sigma),
            } = &mut b.kind
            {
                for (t, s) in target.iter_mut().zip(sigma.iter()) {
                    *t += sign * s;
                }
            }
        }
        out
    }
}

/// Initial-slice samples with optional additive Gaussian corruption.
pub fn initial_condition(
    problem: &ProblemSpec,
    xs: &[f64],
    noise: &NoiseSpec,
) -> Result<Vec<BoundarySample>> {
    noise.validate()?;
    let d = &problem.domain;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            if x < d.x_min || x > d.x_max {
                return Err(Error::Config(format!("initial point x = {x} outside domain")));
            }
            let mut target = problem.clean_initial(x);
            for (c, v) in target.iter_mut().enumerate() {
                let on = noise.switch(c);
                if on != 0.0 && noise.sigma > 0.0 {
                    *v += on * noise.sigma * noise_draw(noise.seed, i, c);
                }
            }
            Ok(BoundarySample::value([x, d.t_min], target))
        })
        .collect()
}

/// Spatial boundary constraints at the given times: periodic pairs for
/// Schrodinger, homogeneous Dirichlet on both ends for Burgers.
pub fn boundary_constraints(problem: &ProblemSpec, ts: &[f64]) -> Result<Vec<BoundarySample>> {
    let d = &problem.domain;
    if let Some(t) = ts.iter().find(|&&t| t < d.t_min || t > d.t_max) {
        return Err(Error::Config(format!("boundary time t = {t} outside domain")));
    }
    Ok(match problem.kind {
        ProblemKind::Schrodinger => ts
            .iter()
            .map(|&t| BoundarySample {
                point: [d.x_max, t],
                kind: BoundaryKind::Periodic {
                    partner: [d.x_min, t],
                },
            })
            .collect(),
        ProblemKind::Burgers => ts
            .iter()
            .flat_map(|&t| {
                [
                    BoundarySample::value([d.x_min, t], vec![0.0]),
                    BoundarySample::value([d.x_max, t], vec![0.0]),
                ]
            })
            .collect(),
    })
}

/// Stratified sample of `n` points, one per stratum along each axis.
pub fn latin_hypercube(domain: &Domain, n: usize, rng: &mut impl Rng) -> Vec<[f64; 2]> {
    let mut axis = |lo: f64, hi: f64| {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        strata
            .into_iter()
            .map(|k| lo + (hi - lo) * (k as f64 + rng.random::<f64>()) / n as f64)
            .collect::<Vec<_>>()
    };
    let xs = axis(domain.x_min, domain.x_max);
    let ts = axis(domain.t_min, domain.t_max);
    xs.into_iter().zip(ts).map(|(x, t)| [x, t]).collect()
}

/// Point counts and seed used to build a [`SampleSet`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Equispaced x points on the initial slice.
    pub n_initial: usize,
    /// Uniform random times per spatial boundary.
    pub n_boundary_times: usize,
    pub n_collocation: usize,
    pub seed: u64,
}

impl SamplingConfig {
    pub fn for_kind(kind: ProblemKind) -> Self {
        Self {
            n_initial: 50,
            n_boundary_times: 50,
            n_collocation: match kind {
                ProblemKind::Schrodinger => 20_000,
                ProblemKind::Burgers => 10_000,
            },
            seed: 0,
        }
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Full training sample set for a problem.
pub fn sample(problem: &ProblemSpec, cfg: &SamplingConfig, noise: &NoiseSpec) -> Result<SampleSet> {
    problem.validate()?;
    let d = &problem.domain;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let xs = linspace(d.x_min, d.x_max, cfg.n_initial);
    let mut boundary = initial_condition(problem, &xs, noise)?;
    let times = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..cfg.n_boundary_times)
            .map(|_| rng.random_range(d.t_min..=d.t_max))
            .collect()
    };
    match problem.kind {
        ProblemKind::Schrodinger => {
            let ts = times(&mut rng);
            boundary.extend(boundary_constraints(problem, &ts)?);
        }
        ProblemKind::Burgers => {
            let left = times(&mut rng);
            let right = times(&mut rng);
            for (ts, x) in [(left, d.x_min), (right, d.x_max)] {
                boundary.extend(
                    ts.into_iter()
                        .map(|t| BoundarySample::value([x, t], vec![0.0])),
                );
            }
        }
    }
    let collocation = latin_hypercube(d, cfg.n_collocation, &mut rng);
    Ok(SampleSet {
        boundary,
        collocation,
        data: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_initial_condition_is_exact() {
        let p = ProblemSpec::schrodinger();
        let ic = initial_condition(&p, &[0.0, 1.3], &NoiseSpec::clean()).unwrap();
        assert_eq!(ic[0].kind, BoundaryKind::Value { target: vec![2.0, 0.0], sigma: None });
        let b = ProblemSpec::burgers();
        let ic = initial_condition(&b, &[0.5], &NoiseSpec::clean()).unwrap();
        assert_eq!(ic[0].kind, BoundaryKind::Value { target: vec![-1.0], sigma: None });
    }

    #[test]
    fn noise_is_unbiased() {
        let p = ProblemSpec::schrodinger();
        let xs: Vec<f64> = linspace(-5.0, 5.0, 10_000);
        let ic = initial_condition(&p, &xs, &NoiseSpec::gaussian(0.1, 42)).unwrap();
        let mean = ic
            .iter()
            .map(|b| match &b.kind {
                BoundaryKind::Value { target, .. } => target[0] - 2.0 / b.point[0].cosh(),
                _ => unreachable!(),
            })
            .sum::<f64>()
            / xs.len() as f64;
        assert!(mean.abs() < 3.0 * 0.1 / 100.0, "mean {mean}");
    }

    #[test]
    fn noise_draws_are_reproducible_and_uncorrelated() {
        let draws: Vec<f64> = (0..10_000).map(|i| noise_draw(9, i, 0)).collect();
        assert_eq!(draws[17], noise_draw(9, 17, 0));
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
        let lag1 = draws
            .windows(2)
            .map(|w| (w[0] - mean) * (w[1] - mean))
            .sum::<f64>()
            / (n - 1.0)
            / var;
        assert!(lag1.abs() < 0.05, "lag-1 autocorrelation {lag1}");
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn boundary_constraint_structure() {
        let s = ProblemSpec::schrodinger();
        let bc = boundary_constraints(&s, &[0.4]).unwrap();
        assert_eq!(bc.len(), 1);
        assert_eq!(bc[0].scalar_constraints(2), 4);
        let b = ProblemSpec::burgers();
        let bc = boundary_constraints(&b, &[0.3]).unwrap();
        assert_eq!(
            bc,
            vec![
                BoundarySample::value([-1.0, 0.3], vec![0.0]),
                BoundarySample::value([1.0, 0.3], vec![0.0]),
            ]
        );
        assert!(boundary_constraints(&b, &[]).unwrap().is_empty());
        assert!(boundary_constraints(&b, &[2.0]).is_err());
    }

    #[test]
    fn latin_hypercube_fills_each_stratum_once() {
        let d = Domain::new(-1.0, 1.0, 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = latin_hypercube(&d, 64, &mut rng);
        let mut xs: Vec<usize> = pts.iter().map(|p| ((p[0] + 1.0) / 2.0 * 64.0) as usize).collect();
        let mut ts: Vec<usize> = pts.iter().map(|p| (p[1] * 64.0) as usize).collect();
        xs.sort();
        ts.sort();
        assert_eq!(xs, (0..64).collect::<Vec<_>>());
        assert_eq!(ts, (0..64).collect::<Vec<_>>());
    }

    #[test]
    fn sample_counts_match_benchmark_setup() {
        let s = ProblemSpec::schrodinger();
        let set = sample(&s, &SamplingConfig::for_kind(s.kind), &NoiseSpec::clean()).unwrap();
        assert_eq!(set.boundary.len(), 100);
        assert_eq!(set.collocation.len(), 20_000);
        let b = ProblemSpec::burgers();
        let set = sample(&b, &SamplingConfig::for_kind(b.kind), &NoiseSpec::clean()).unwrap();
        assert_eq!(set.boundary.len(), 150);
        assert_eq!(set.collocation.len(), 10_000);
        assert!(set.collocation.iter().all(|p| b.domain.contains(p[0], p[1])));
    }

    #[test]
    fn smoothing_round_trip_on_initial_slice() {
        let s = ProblemSpec::schrodinger();
        let cfg = SamplingConfig { n_initial: 5, n_boundary_times: 3, n_collocation: 4, seed: 0 };
        let set = sample(&s, &cfg, &NoiseSpec::gaussian(0.1, 3)).unwrap();
        let (xs, ch) = set.initial_slice();
        assert_eq!(xs.len(), 5);
        let stds = vec![vec![0.5; 5], vec![0.25; 5]];
        let smoothed = set.with_initial_targets(&ch, Some(&stds));
        let plus = smoothed.shifted_initial(1.0);
        let (_, ch_plus) = plus.initial_slice();
        assert!((ch_plus[0][2] - ch[0][2] - 0.5).abs() < 1e-15);
        assert!((ch_plus[1][4] - ch[1][4] - 0.25).abs() < 1e-15);
    }
}
