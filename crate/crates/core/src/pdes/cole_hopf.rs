//! Exact viscous Burgers solution for `u(x, 0) = -sin(pi x)` via the
//! Cole-Hopf transform, evaluated with Gauss-Hermite quadrature.
//!
//! With `c = sqrt(4 nu t)` and `f(y) = exp(-cos(pi y) / (2 pi nu))`,
//!
//! ```text
//! u(x, t) = - sum_i w_i sin(pi (x - c z_i)) f(x - c z_i) / sum_i w_i f(x - c z_i)
//! ```
//!
//! The weights are carried as logarithms and the sums are shifted by their
//! largest exponent, so tiny viscosities do not overflow.

use std::f64::consts::PI;

use super::problem::{Domain, ProblemKind};
use super::reference::{ReferenceMeta, ReferenceSolution};
use super::sampling::linspace;
use crate::error::{Error, Result};

/// Order-doubling acceptance threshold.
pub const ORDER_DOUBLING_TOL: f64 = 1e-6;
const MIN_ORDER: usize = 32;
const MAX_ORDER: usize = 4096;

/// Gauss-Hermite rule for the weight `exp(-z^2)`, weights as logarithms.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub log_weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes by Sturm-sequence bisection on the Jacobi matrix (distinct by
    /// construction); weights from the orthonormal recurrence at each node.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Hermite order must be positive");
        let mut nodes = vec![0.0; n];
        let mut log_weights = vec![0.0; n];
        let nf = n as f64;
        let log_p0 = -0.25 * PI.ln();
        let mut hi = (2.0 * nf + 1.0).sqrt() + 1.0;
        for i in 0..n / 2 {
            // i-th largest root: n - 1 - i eigenvalues lie below it
            let below = n - 1 - i;
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if eigenvalues_below(mid, n) > below {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let z = 0.5 * (lo + hi);
            let lw = 2f64.ln() - (2.0 * nf).ln() - 2.0 * log_p_prev(z, n, log_p0);
            nodes[i] = z;
            log_weights[i] = lw;
            nodes[n - 1 - i] = -z;
            log_weights[n - 1 - i] = lw;
            hi = z;
        }
        if n % 2 == 1 {
            let lw = 2f64.ln() - (2.0 * nf).ln() - 2.0 * log_p_prev(0.0, n, log_p0);
            nodes[n / 2] = 0.0;
            log_weights[n / 2] = lw;
        }
        Self { nodes, log_weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }
}

/// Number of eigenvalues of the Hermite Jacobi matrix below `z`.
fn eigenvalues_below(z: f64, n: usize) -> usize {
    let mut d = -z;
    let mut count = usize::from(d < 0.0);
    for j in 1..n {
        let prev = if d == 0.0 { f64::MIN_POSITIVE } else { d };
        d = -z - (j as f64 / 2.0) / prev;
        count += usize::from(d < 0.0);
    }
    count
}

/// `ln |p_{n-1}(z)|` for the orthonormal Hermite polynomials, accumulated
/// through ratios so large `n` does not overflow.
fn log_p_prev(z: f64, n: usize, log_p0: f64) -> f64 {
    if z == 0.0 {
        // odd p_j vanish at 0, so step over them: p_j(0) = -sqrt((j-1)/j) p_{j-2}(0)
        return log_p0
            + (2..n)
                .step_by(2)
                .map(|j| 0.5 * ((j as f64 - 1.0) / j as f64).ln())
                .sum::<f64>();
    }
    let mut log_p = log_p0;
    let mut r = 2f64.sqrt() * z;
    for j in 2..=n {
        log_p += r.abs().ln();
        let jf = j as f64;
        let denom = if r == 0.0 { f64::MIN_POSITIVE } else { r };
        r = z * (2.0 / jf).sqrt() - ((jf - 1.0) / jf).sqrt() / denom;
    }
    log_p
}

fn solution_with_rule(rule: &GaussHermite, x: f64, t: f64, viscosity: f64) -> f64 {
    let c = (4.0 * viscosity * t).sqrt();
    let scale = 1.0 / (2.0 * PI * viscosity);
    let exps: Vec<f64> = rule
        .nodes
        .iter()
        .zip(&rule.log_weights)
        .map(|(z, lw)| lw - (PI * (x - c * z)).cos() * scale)
        .collect();
    let top = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (e, z) in exps.iter().zip(&rule.nodes) {
        let w = (e - top).exp();
        num += w * (PI * (x - c * z)).sin();
        den += w;
    }
    -num / den
}

/// Rules of doubling order, built lazily and reused across grid nodes.
pub struct RuleLadder {
    rules: Vec<GaussHermite>,
}

impl Default for RuleLadder {
    fn default() -> Self {
        Self::new()
    }
}

impl RuleLadder {
    pub fn new() -> Self {
        Self { rules: Vec::new() }
    }

    fn rule(&mut self, level: usize) -> &GaussHermite {
        while self.rules.len() <= level {
            let n = MIN_ORDER << self.rules.len();
            self.rules.push(GaussHermite::new(n));
        }
        &self.rules[level]
    }

    /// `u(x, t)` refined until two successive orders agree within `tol`;
    /// returns `(u, last disagreement, order used)`.
    pub fn solve(&mut self, x: f64, t: f64, viscosity: f64, tol: f64) -> Result<(f64, f64, usize)> {
        if t <= 0.0 {
            return Ok((-(PI * x).sin(), 0.0, 0));
        }
        let mut prev = solution_with_rule(self.rule(0), x, t, viscosity);
        let mut level = 1;
        loop {
            let rule = self.rule(level);
            let order = rule.order();
            let cur = solution_with_rule(rule, x, t, viscosity);
            let diff = (cur - prev).abs();
            if diff <= tol {
                return Ok((cur, diff, order));
            }
            if order >= MAX_ORDER {
                return Err(Error::Convergence(format!(
                    "Cole-Hopf quadrature at (x={x}, t={t}) still changes by {diff:e} at order {order}"
                )));
            }
            prev = cur;
            level += 1;
        }
    }
}

/// Single-point exact solution, converged to `tol`.
pub fn burgers_exact(x: f64, t: f64, viscosity: f64, tol: f64) -> Result<f64> {
    RuleLadder::new().solve(x, t, viscosity, tol).map(|r| r.0)
}

/// Exact solution on `nx` equispaced x points (endpoints included) and `nt`
/// equispaced times.
pub fn reference_burgers(
    domain: &Domain,
    viscosity: f64,
    nx: usize,
    nt: usize,
) -> Result<ReferenceSolution> {
    domain.validate()?;
    if !(viscosity > 0.0) {
        return Err(Error::Config(format!("viscosity must be positive, got {viscosity}")));
    }
    if nx < 2 || nt < 2 {
        return Err(Error::Config("reference grid needs at least 2 x 2 nodes".into()));
    }
    let x = linspace(domain.x_min, domain.x_max, nx);
    let t = linspace(domain.t_min, domain.t_max, nt);
    let mut ladder = RuleLadder::new();
    let mut u = Vec::with_capacity(nx * nt);
    let mut worst: f64 = 0.0;
    let mut max_order = 0;
    for &ti in &t {
        for &xi in &x {
            let (val, diff, order) = ladder.solve(xi, ti, viscosity, ORDER_DOUBLING_TOL)?;
            worst = worst.max(diff);
            max_order = max_order.max(order);
            u.push(val);
        }
    }
    Ok(ReferenceSolution {
        x,
        t,
        u,
        v: None,
        meta: ReferenceMeta {
            oracle: "cole-hopf-gauss-hermite".into(),
            kind: ProblemKind::Burgers,
            domain: *domain,
            nx,
            nt,
            convergence_residual: worst,
            resolution: max_order,
        },
    })
}
