//! Exact Gaussian-process regression on 1-D boundary slices.
//!
//! Hyperparameters live in log space in the order
//! `[ln A, ln l, ln sigma_n^2]`, with `ln alpha` appended for the rational
//! quadratic kernel.

mod bessel;

use std::io::Write;
use std::path::Path;

use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{Lbfgs, LbfgsStatus};

pub use bessel::{bessel_k, bessel_k_pair};

/// Kernel family with the hyperparameters that are not optimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelFamily {
    Rbf,
    Matern { nu: f64 },
    RationalQuadratic,
}

impl KernelFamily {
    /// The five families compared in the kernel cross-validation table.
    pub fn table_families() -> Vec<Self> {
        vec![
            Self::Rbf,
            Self::Matern { nu: 0.1 },
            Self::Matern { nu: 1.5 },
            Self::Matern { nu: 4.0 },
            Self::RationalQuadratic,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Rbf => "rbf",
            Self::Matern { .. } => "matern",
            Self::RationalQuadratic => "rq",
        }
    }

    fn num_params(&self) -> usize {
        match self {
            Self::RationalQuadratic => 4,
            _ => 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Self::Matern { nu } = self {
            if !(*nu > 0.0 && nu.is_finite()) {
                return Err(Error::Config(format!("Matern order must be positive, got {nu}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelBase {
    Rbf,
    Matern { nu: f64 },
    RationalQuadratic { alpha: f64 },
}

/// Stationary kernel plus additive white noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub base: KernelBase,
    pub amplitude: f64,
    pub lengthscale: f64,
    /// White-noise variance `sigma_n^2`.
    pub noise: f64,
}

impl KernelSpec {
    pub fn rbf(amplitude: f64, lengthscale: f64, noise: f64) -> Self {
        Self {
            base: KernelBase::Rbf,
            amplitude,
            lengthscale,
            noise,
        }
    }

    pub fn family(&self) -> KernelFamily {
        match self.base {
            KernelBase::Rbf => KernelFamily::Rbf,
            KernelBase::Matern { nu } => KernelFamily::Matern { nu },
            KernelBase::RationalQuadratic { .. } => KernelFamily::RationalQuadratic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.amplitude > 0.0
            && self.amplitude.is_finite()
            && self.lengthscale > 0.0
            && self.lengthscale.is_finite()
            && self.noise >= 0.0
            && self.noise.is_finite()
            && match self.base {
                KernelBase::Rbf => true,
                KernelBase::Matern { nu } => nu > 0.0 && nu.is_finite(),
                KernelBase::RationalQuadratic { alpha } => alpha > 0.0 && alpha.is_finite(),
            };
        if !ok {
            return Err(Error::Config(format!("invalid kernel {self:?}")));
        }
        Ok(())
    }

    /// Noise-free covariance at distance `r`.
    pub fn signal(&self, r: f64) -> f64 {
        let a = self.amplitude;
        let l = self.lengthscale;
        let r = r.abs();
        match self.base {
            KernelBase::Rbf => a * (-0.5 * (r / l).powi(2)).exp(),
            KernelBase::RationalQuadratic { alpha } => {
                a * (1.0 + r * r / (2.0 * alpha * l * l)).powf(-alpha)
            }
            KernelBase::Matern { nu } => a * matern_unit(nu, r / l),
        }
    }

    /// `k(x_i, x_j)`; the noise term is added only for the same index.
    pub fn eval(&self, xi: f64, xj: f64, same_index: bool) -> f64 {
        let k = self.signal(xi - xj);
        if same_index {
            k + self.noise
        } else {
            k
        }
    }

    pub fn log_params(&self) -> Vec<f64> {
        let mut p = vec![self.amplitude.ln(), self.lengthscale.ln(), self.noise.ln()];
        if let KernelBase::RationalQuadratic { alpha } = self.base {
            p.push(alpha.ln());
        }
        p
    }

    pub fn from_log_params(family: KernelFamily, p: &[f64]) -> Self {
        let base = match family {
            KernelFamily::Rbf => KernelBase::Rbf,
            KernelFamily::Matern { nu } => KernelBase::Matern { nu },
            KernelFamily::RationalQuadratic => KernelBase::RationalQuadratic { alpha: p[3].exp() },
        };
        Self {
            base,
            amplitude: p[0].exp(),
            lengthscale: p[1].exp(),
            noise: p[2].exp(),
        }
    }

    /// Signal value and its derivatives with respect to `ln A`, `ln l` and,
    /// for the rational quadratic, `ln alpha`.
    fn signal_with_grad(&self, r: f64, grad: &mut [f64]) -> f64 {
        let a = self.amplitude;
        let s = r.abs() / self.lengthscale;
        let (k, dl) = match self.base {
            KernelBase::Rbf => {
                let k = a * (-0.5 * s * s).exp();
                (k, k * s * s)
            }
            KernelBase::RationalQuadratic { alpha } => {
                let u = s * s / (2.0 * alpha);
                let base = 1.0 + u;
                let k = a * base.powf(-alpha);
                grad[2] = k * alpha * (u / base - base.ln());
                (k, 2.0 * alpha * u * k / base)
            }
            KernelBase::Matern { nu } => {
                let (f, df) = matern_unit_dlog(nu, s);
                (a * f, a * df)
            }
        };
        grad[0] = k;
        grad[1] = dl;
        k
    }
}

/// Unit-amplitude Matern correlation at scaled distance `s = r / l`.
fn matern_unit(nu: f64, s: f64) -> f64 {
    if s == 0.0 {
        return 1.0;
    }
    if nu == 0.5 {
        return (-s).exp();
    }
    if nu == 1.5 {
        let z = 3f64.sqrt() * s;
        return (1.0 + z) * (-z).exp();
    }
    if nu == 2.5 {
        let z = 5f64.sqrt() * s;
        return (1.0 + z + z * z / 3.0) * (-z).exp();
    }
    matern_bessel(nu, s)
}

/// Matern correlation through `K_nu`, with no closed-form shortcuts.
pub fn matern_bessel(nu: f64, s: f64) -> f64 {
    if s == 0.0 {
        return 1.0;
    }
    let z = (2.0 * nu).sqrt() * s;
    matern_prefactor(nu, z) * bessel_k(nu, z)
}

/// `2^(1-nu) / Gamma(nu) * z^nu`, in log space.
fn matern_prefactor(nu: f64, z: f64) -> f64 {
    ((1.0 - nu) * std::f64::consts::LN_2 + nu * z.ln()).exp() / bessel::gamma(nu)
}

/// Matern correlation and its derivative with respect to `ln l`.
fn matern_unit_dlog(nu: f64, s: f64) -> (f64, f64) {
    if s == 0.0 {
        return (1.0, 0.0);
    }
    if nu == 0.5 {
        let f = (-s).exp();
        return (f, s * f);
    }
    if nu == 1.5 {
        let z = 3f64.sqrt() * s;
        let e = (-z).exp();
        return ((1.0 + z) * e, z * z * e);
    }
    if nu == 2.5 {
        let z = 5f64.sqrt() * s;
        let e = (-z).exp();
        return ((1.0 + z + z * z / 3.0) * e, z * z * (1.0 + z) * e / 3.0);
    }
    // d/dz [z^nu K_nu(z)] = -z^nu K_{nu-1}(z) and dz/d(ln l) = -z
    let z = (2.0 * nu).sqrt() * s;
    let pre = matern_prefactor(nu, z);
    let (k_nu, k_lower) = if nu >= 1.0 {
        let (lower, k) = bessel_k_pair(nu - 1.0, z);
        (k, lower)
    } else {
        (bessel_k(nu, z), bessel_k(1.0 - nu, z))
    };
    (pre * k_nu, pre * z * k_lower)
}

/// Gram matrix `K(X, X) + sigma_n^2 I` (no jitter).
pub fn gram(spec: &KernelSpec, x: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = spec.signal(0.0) + spec.noise;
        for j in 0..i {
            let v = spec.signal(x[i] - x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Jitter levels tried on the diagonal, relative to the amplitude.
pub const JITTER_LEVELS: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// Cholesky factor of `k + j I` for the smallest workable jitter `j`.
pub fn factor_with_jitter(k: &DMatrix<f64>, amplitude: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    for &level in &JITTER_LEVELS {
        let jitter = level * amplitude;
        let mut m = k.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if m.iter().any(|v| !v.is_finite()) {
            break;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol, jitter));
        }
    }
    Err(Error::Cholesky {
        jitter: JITTER_LEVELS[JITTER_LEVELS.len() - 1] * amplitude,
    })
}

fn check_data(x: &[f64], y: &[f64], min: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} inputs but {} targets", x.len(), y.len())));
    }
    if x.len() < min {
        return Err(Error::Config(format!("need at least {min} points, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("GP training data".into()));
    }
    Ok(())
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Log-marginal likelihood and its gradient in log-parameter space.
pub fn log_marginal_likelihood(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    spec.validate()?;
    check_data(x, y, 1)?;
    let n = x.len();
    let np = spec.family().num_params();
    // dK/d(theta_p) for the signal parameters, stored per pair
    let mut k = DMatrix::zeros(n, n);
    let mut dk: Vec<DMatrix<f64>> = (0..np).map(|_| DMatrix::zeros(n, n)).collect();
    let mut g = [0.0; 4];
    for i in 0..n {
        for j in 0..=i {
            g.iter_mut().for_each(|v| *v = 0.0);
            let v = spec.signal_with_grad(x[i] - x[j], &mut g);
            k[(i, j)] = v;
            k[(j, i)] = v;
            for (p, m) in dk.iter_mut().enumerate() {
                // slot 2 of g is the RQ alpha derivative; noise handled below
                let d = match p {
                    0 => g[0],
                    1 => g[1],
                    2 => 0.0,
                    _ => g[2],
                };
                m[(i, j)] = d;
                m[(j, i)] = d;
            }
        }
        k[(i, i)] += spec.noise;
        dk[2][(i, i)] = spec.noise;
    }
    let (chol, jitter) = factor_with_jitter(&k, spec.amplitude)?;
    // the jitter is proportional to A, so it belongs to the A derivative
    for i in 0..n {
        dk[0][(i, i)] += jitter;
    }
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().take(n).map(|d| d.ln()).sum::<f64>();
    let value = -0.5 * yv.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;
    let kinv = chol.inverse();
    // W = alpha alpha^T - K^{-1}; dLML = tr(W dK) / 2
    let mut grad = vec![0.0; np];
    for i in 0..n {
        for j in 0..n {
            let w = alpha[i] * alpha[j] - kinv[(i, j)];
            for p in 0..np {
                grad[p] += w * dk[p][(i, j)];
            }
        }
    }
    grad.iter_mut().for_each(|v| *v *= 0.5);
    if !value.is_finite() || grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("log-marginal likelihood".into()));
    }
    Ok((value, grad))
}

/// A conditioned GP ready for prediction.
#[derive(Debug, Clone)]
pub struct GpModel {
    pub kernel: KernelSpec,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Diagonal jitter that made the factorisation succeed.
    pub jitter: f64,
    /// Log-marginal likelihood at `kernel`.
    pub lml: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

impl GpModel {
    /// Conditions on `(x, y)` with fixed hyperparameters.
    pub fn new(kernel: KernelSpec, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        kernel.validate()?;
        check_data(&x, &y, 1)?;
        let (chol, jitter) = factor_with_jitter(&gram(&kernel, &x), kernel.amplitude)?;
        let yv = DVector::from_column_slice(&y);
        let alpha = chol.solve(&yv);
        let n = x.len();
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().take(n).map(|d| d.ln()).sum::<f64>();
        let lml = -0.5 * yv.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * LN_2PI;
        Ok(Self {
            kernel,
            x,
            y,
            jitter,
            lml,
            chol,
            alpha,
        })
    }

    /// Lower Cholesky factor of `K + sigma_n^2 I + jitter I`.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Weight vector `(K + sigma_n^2 I)^{-1} y`.
    pub fn weights(&self) -> &[f64] {
        self.alpha.as_slice()
    }

    /// Posterior mean and latent (noise-free) variance at each point.
    pub fn predict(&self, xs: &[f64]) -> Vec<(f64, f64)> {
        let n = self.x.len();
        let prior = self.kernel.signal(0.0);
        let l = self.chol.l_dirty();
        xs.iter()
            .map(|&xs| {
                let ks = DVector::from_iterator(n, self.x.iter().map(|&xi| self.kernel.signal(xs - xi)));
                let mean = ks.dot(&self.alpha);
                let v = l
                    .solve_lower_triangular(&ks)
                    .expect("Cholesky factor has a positive diagonal");
                let mut var = prior - v.dot(&v);
                if var < 0.0 {
                    if var < -1e-10 {
                        warn!("clipping negative posterior variance {var:e} at x = {xs}");
                    }
                    var = 0.0;
                }
                (mean, var)
            })
            .collect()
    }

    pub fn predict_mean(&self, xs: &[f64]) -> Vec<f64> {
        self.predict(xs).into_iter().map(|(m, _)| m).collect()
    }
}

/// Box in log-parameter space, scaled to the data.
fn log_bounds(family: KernelFamily, x: &[f64], y: &[f64]) -> Vec<[f64; 2]> {
    let (var, range) = data_scales(x, y);
    // below the mean spacing the signal is indistinguishable from white noise
    let spacing = range / (x.len() - 1).max(1) as f64;
    let mut b = vec![
        [(1e-6 * var).ln(), (1e4 * var).ln()],
        [spacing.ln(), (1e2 * range).ln()],
        [(1e-12 * var).ln(), (10.0 * var).ln()],
    ];
    if family == KernelFamily::RationalQuadratic {
        b.push([(1e-3f64).ln(), (1e3f64).ln()]);
    }
    b
}

/// `(var(y), range(x))`, floored so that the bounds stay finite.
fn data_scales(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (var.max(1e-8), (hi - lo).max(1e-8))
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    let (a, b) = (lo.ln(), hi.ln());
    if b <= a {
        return a;
    }
    rng.random_range(a..b)
}

/// Restarts used when none are specified.
pub const DEFAULT_RESTARTS: usize = 8;

/// Maximum L-BFGS iterations per restart.
const FIT_ITERATIONS: usize = 300;

/// Maximizes the log-marginal likelihood from `restarts` random starts.
pub fn fit(x: &[f64], y: &[f64], family: KernelFamily, restarts: usize, seed: u64) -> Result<GpModel> {
    family.validate()?;
    check_data(x, y, 4)?;
    if restarts == 0 {
        return Err(Error::Config("at least one restart is required".into()));
    }
    let (var, range) = data_scales(x, y);
    let bounds = log_bounds(family, x, y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Vec<f64>> = (0..restarts)
        .map(|_| {
            let mut p = vec![
                log_uniform(&mut rng, 0.1 * var, 10.0 * var),
                log_uniform(&mut rng, 0.1 * range, range),
                log_uniform(&mut rng, 1e-4f64.min(var), var),
            ];
            if family == KernelFamily::RationalQuadratic {
                p.push(log_uniform(&mut rng, 0.1, 10.0));
            }
            p
        })
        .collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in starts {
        let Ok((lml, p)) = optimize_restart(family, x, y, start, &bounds) else {
            continue;
        };
        // strict comparison keeps the lowest restart index on ties
        if best.as_ref().is_none_or(|(b, _)| lml > *b) {
            best = Some((lml, p));
        }
    }
    let (_, p) = best.ok_or(Error::FitFailed(restarts))?;
    GpModel::new(KernelSpec::from_log_params(family, &p), x.to_vec(), y.to_vec())
}

fn clamp_box(p: &[f64], bounds: &[[f64; 2]]) -> Vec<f64> {
    p.iter().zip(bounds).map(|(v, [lo, hi])| v.clamp(*lo, *hi)).collect()
}

/// L-BFGS on the negative LML; leaving the box costs a quadratic penalty.
fn optimize_restart(
    family: KernelFamily,
    x: &[f64],
    y: &[f64],
    start: Vec<f64>,
    bounds: &[[f64; 2]],
) -> Result<(f64, Vec<f64>)> {
    const PENALTY: f64 = 1e3;
    let mut objective = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
        let inside = clamp_box(p, bounds);
        let spec = KernelSpec::from_log_params(family, &inside);
        let (lml, grad) = match log_marginal_likelihood(&spec, x, y) {
            Ok(v) => v,
            Err(Error::Cholesky { .. }) | Err(Error::NonFinite(_)) => {
                return Err(Error::NonFinite("LML".into()));
            }
            Err(e) => return Err(e),
        };
        let mut f = -lml;
        let mut g = vec![0.0; p.len()];
        for i in 0..p.len() {
            let excess = p[i] - inside[i];
            if excess != 0.0 {
                f += PENALTY * excess * excess;
                g[i] = 2.0 * PENALTY * excess;
            } else {
                g[i] = -grad[i];
            }
        }
        Ok((f, g))
    };
    let mut p = clamp_box(&start, bounds);
    let (mut f, mut g) = objective(&p)?;
    let mut opt = Lbfgs::new(20);
    opt.grad_tol = 1e-9;
    opt.f_tol = 1e-13;
    for _ in 0..FIT_ITERATIONS {
        match opt.step(&mut objective, &mut p, &mut f, &mut g)? {
            LbfgsStatus::Progress { .. } => {}
            LbfgsStatus::Converged | LbfgsStatus::Stalled => break,
        }
    }
    let p = clamp_box(&p, bounds);
    let (lml, _) = log_marginal_likelihood(&KernelSpec::from_log_params(family, &p), x, y)?;
    Ok((lml, p))
}

/// One row of the kernel cross-validation table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelScore {
    pub family: KernelFamily,
    pub train_mse: f64,
    pub val_mse: f64,
}

/// Fold index sets: a seeded shuffle split into `k` contiguous parts.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    (0..k).map(|f| idx[f * n / k..(f + 1) * n / k].to_vec()).collect()
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / a.len() as f64
}

/// Average train and validation MSE of the posterior mean per family,
/// sorted by validation MSE (stable, so input order breaks ties).
pub fn kfold_kernel_select(
    x: &[f64],
    y: &[f64],
    k: usize,
    families: &[KernelFamily],
    restarts: usize,
    seed: u64,
) -> Result<Vec<KernelScore>> {
    check_data(x, y, 1)?;
    if k < 2 || x.len() < k {
        return Err(Error::Config(format!("k-fold needs 2 <= k <= n, got k = {k}, n = {}", x.len())));
    }
    let folds = kfold_indices(x.len(), k, seed);
    let mut scores = Vec::with_capacity(families.len());
    for &family in families {
        let (mut train, mut val) = (0.0, 0.0);
        for (f, held) in folds.iter().enumerate() {
            let mut keep = vec![true; x.len()];
            held.iter().for_each(|&i| keep[i] = false);
            let pick = |v: &[f64], want: bool| -> Vec<f64> {
                v.iter().zip(&keep).filter(|(_, &k)| k == want).map(|(a, _)| *a).collect()
            };
            let (xt, yt) = (pick(x, true), pick(y, true));
            let (xv, yv) = (pick(x, false), pick(y, false));
            let model = fit(&xt, &yt, family, restarts, seed.wrapping_add(f as u64))?;
            train += mse(&model.predict_mean(&xt), &yt);
            val += mse(&model.predict_mean(&xv), &yv);
        }
        scores.push(KernelScore {
            family,
            train_mse: train / k as f64,
            val_mse: val / k as f64,
        });
    }
    scores.sort_by(|a, b| a.val_mse.total_cmp(&b.val_mse));
    Ok(scores)
}

/// Writes `kernel,param,train_mse,val_mse`; `param` is the Matern order.
pub fn write_kernel_table(scores: &[KernelScore], path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "kernel,param,train_mse,val_mse")?;
    for s in scores {
        let param = match s.family {
            KernelFamily::Matern { nu } => nu.to_string(),
            _ => String::new(),
        };
        writeln!(out, "{},{},{:e},{:e}", s.family.name(), param, s.train_mse, s.val_mse)?;
    }
    Ok(())
}

/// GP-smoothed boundary slice, one model per output channel.
#[derive(Debug, Clone)]
pub struct SmoothedBoundary {
    pub x: Vec<f64>,
    /// Posterior mean per channel at `x`.
    pub mean: Vec<Vec<f64>>,
    /// Posterior standard deviation per channel at `x`.
    pub std: Vec<Vec<f64>>,
    pub models: Vec<GpModel>,
}

impl SmoothedBoundary {
    /// Evaluates each channel's model at `x`.
    pub fn from_models(x: Vec<f64>, models: Vec<GpModel>) -> Self {
        let (mut mean, mut std) = (Vec::new(), Vec::new());
        for m in &models {
            let pred = m.predict(&x);
            mean.push(pred.iter().map(|p| p.0).collect());
            std.push(pred.iter().map(|p| p.1.sqrt()).collect());
        }
        Self { x, mean, std, models }
    }

    /// Writes `x,mean_0,std_0,mean_1,std_1,...`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header: Vec<String> = (0..self.mean.len()).map(|c| format!("mean_{c},std_{c}")).collect();
        writeln!(out, "x,{}", header.join(","))?;
        for i in 0..self.x.len() {
            write!(out, "{}", self.x[i])?;
            for c in 0..self.mean.len() {
                write!(out, ",{},{}", self.mean[c][i], self.std[c][i])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Fits each channel independently and predicts back on the slice.
pub fn smooth_boundary(
    x: &[f64],
    channels: &[Vec<f64>],
    family: KernelFamily,
    restarts: usize,
    seed: u64,
) -> Result<SmoothedBoundary> {
    let models = channels
        .iter()
        .enumerate()
        .map(|(c, y)| fit(x, y, family, restarts, seed.wrapping_add(c as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SmoothedBoundary::from_models(x.to_vec(), models))
}
