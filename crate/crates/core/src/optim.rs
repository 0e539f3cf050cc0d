//! First-order and quasi-Newton minimisers over flat parameter vectors.
//!
//! Both work on an objective returning `(value, gradient)`. They are
//! steppers rather than drivers so callers can interleave logging,
//! divergence checks and validation between iterations.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u32,
}

impl Adam {
    pub fn new(n: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= self.learning_rate * mh / (vh.sqrt() + self.epsilon);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of one L-BFGS iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LbfgsStatus {
    /// Accepted a step; the number of objective evaluations it took.
    Progress { evaluations: usize },
    /// Gradient or relative decrease below tolerance; nothing changed.
    Converged,
    /// No acceptable step along the search direction; nothing changed.
    Stalled,
}

/// Limited-memory BFGS with a strong-Wolfe line search.
#[derive(Debug, Clone)]
pub struct Lbfgs {
    pub memory: usize,
    pub grad_tol: f64,
    /// Stop when `(f_old - f_new) / max(|f_old|, |f_new|, 1) <= f_tol`.
    pub f_tol: f64,
    pub max_line_evals: usize,
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
    rho: VecDeque<f64>,
}

impl Lbfgs {
    pub fn new(memory: usize) -> Self {
        Self {
            memory: memory.max(1),
            grad_tol: 1e-10,
            f_tol: 1e-14,
            max_line_evals: 25,
            s: VecDeque::new(),
            y: VecDeque::new(),
            rho: VecDeque::new(),
        }
    }

    pub fn reset(&mut self) {
        self.s.clear();
        self.y.clear();
        self.rho.clear();
    }

    /// Two-loop recursion: `-H g`.
    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let k = self.s.len();
        let mut alpha = vec![0.0; k];
        for i in (0..k).rev() {
            alpha[i] = self.rho[i] * dot(&self.s[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        if k > 0 {
            let gamma = dot(&self.s[k - 1], &self.y[k - 1]) / dot(&self.y[k - 1], &self.y[k - 1]);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..k {
            let beta = self.rho[i] * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }

    /// One iteration from `(x, f, g)`, updated in place on progress.
    pub fn step<F>(&mut self, objective: &mut F, x: &mut Vec<f64>, f: &mut f64, g: &mut Vec<f64>) -> Result<LbfgsStatus>
    where
        F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let gnorm = dot(g, g).sqrt();
        if gnorm <= self.grad_tol {
            return Ok(LbfgsStatus::Converged);
        }
        let mut d = self.direction(g);
        let mut slope = dot(g, &d);
        if slope >= 0.0 {
            self.reset();
            d = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let first = if self.s.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };
        let found = strong_wolfe(objective, x, *f, slope, &d, first, self.max_line_evals)?;
        let Some((step, fnew, gnew, evaluations)) = found else {
            if self.s.is_empty() {
                return Ok(LbfgsStatus::Stalled);
            }
            // stale curvature pairs can give a poor direction; retry once as steepest descent
            self.reset();
            return self.step(objective, x, f, g);
        };
        let s: Vec<f64> = d.iter().map(|v| step * v).collect();
        let y: Vec<f64> = gnew.iter().zip(g.iter()).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if self.s.len() == self.memory {
                self.s.pop_front();
                self.y.pop_front();
                self.rho.pop_front();
            }
            self.s.push_back(s.clone());
            self.y.push_back(y);
            self.rho.push_back(1.0 / sy);
        }
        let decrease = (*f - fnew) / f.abs().max(fnew.abs()).max(1.0);
        for (xi, si) in x.iter_mut().zip(&s) {
            *xi += si;
        }
        *f = fnew;
        *g = gnew;
        if decrease <= self.f_tol {
            return Ok(LbfgsStatus::Converged);
        }
        Ok(LbfgsStatus::Progress { evaluations })
    }
}

/// Strong-Wolfe line search (c1 = 1e-4, c2 = 0.9) by bracketing and
/// zoom with cubic interpolation. Returns `(step, f, g, evaluations)`.
#[allow(clippy::type_complexity)]
fn strong_wolfe<F>(
    objective: &mut F,
    x: &[f64],
    f0: f64,
    slope0: f64,
    d: &[f64],
    first: f64,
    max_evals: usize,
) -> Result<Option<(f64, f64, Vec<f64>, usize)>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    const C1: f64 = 1e-4;
    const C2: f64 = 0.9;
    let mut evals = 0;
    let mut eval = |a: f64, evals: &mut usize| -> Result<(f64, Vec<f64>, f64)> {
        *evals += 1;
        let trial: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + a * di).collect();
        match objective(&trial) {
            Ok((f, g)) if f.is_finite() => {
                let s = dot(&g, d);
                Ok((f, g, s))
            }
            Ok(_) | Err(Error::NonFinite(_)) => Ok((f64::INFINITY, Vec::new(), f64::NAN)),
            Err(e) => Err(e),
        }
    };

    let (mut a_prev, mut f_prev, mut s_prev) = (0.0, f0, slope0);
    let mut a = first;
    let mut bracket = None;
    while evals < max_evals {
        let (fa, ga, sa) = eval(a, &mut evals)?;
        if !fa.is_finite() || fa > f0 + C1 * a * slope0 || (evals > 1 && fa >= f_prev) {
            bracket = Some(((a_prev, f_prev, s_prev), (a, fa, sa)));
            break;
        }
        if sa.abs() <= -C2 * slope0 {
            return Ok(Some((a, fa, ga, evals)));
        }
        if sa >= 0.0 {
            bracket = Some(((a, fa, sa), (a_prev, f_prev, s_prev)));
            break;
        }
        a_prev = a;
        f_prev = fa;
        s_prev = sa;
        a *= 2.0;
    }
    let Some(((mut lo, mut flo, mut slo), (mut hi, mut fhi, mut shi))) = bracket else {
        return Ok(None);
    };
    while evals < max_evals {
        let mut trial = cubic_min(lo, flo, slo, hi, fhi, shi);
        let (left, right) = if lo < hi { (lo, hi) } else { (hi, lo) };
        let margin = 0.1 * (right - left);
        if !trial.is_finite() || trial < left + margin || trial > right - margin {
            trial = 0.5 * (lo + hi);
        }
        let (ft, gt, st) = eval(trial, &mut evals)?;
        if !ft.is_finite() || ft > f0 + C1 * trial * slope0 || ft >= flo {
            hi = trial;
            fhi = ft;
            shi = st;
        } else {
            if st.abs() <= -C2 * slope0 {
                return Ok(Some((trial, ft, gt, evals)));
            }
            if st * (hi - lo) >= 0.0 {
                hi = lo;
                fhi = flo;
                shi = slo;
            }
            lo = trial;
            flo = ft;
            slo = st;
        }
        if (hi - lo).abs() < 1e-16 * lo.abs().max(1.0) {
            break;
        }
    }
    // settle for sufficient decrease if the curvature condition never held
    if lo > 0.0 && flo < f0 {
        let (f, g, _) = eval(lo, &mut evals)?;
        if f.is_finite() {
            return Ok(Some((lo, f, g, evals)));
        }
    }
    Ok(None)
}

/// Minimiser of the cubic interpolating values and slopes at `a` and `b`.
fn cubic_min(a: f64, fa: f64, sa: f64, b: f64, fb: f64, sb: f64) -> f64 {
    if !fb.is_finite() || !sb.is_finite() {
        return f64::NAN;
    }
    let d1 = sa + sb - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - sa * sb;
    if disc < 0.0 {
        return f64::NAN;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    b - (b - a) * (sb + d2 - d1) / (sb - sa + 2.0 * d2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, g))
    }

    #[test]
    fn lbfgs_solves_rosenbrock() {
        let mut x = vec![-1.2, 1.0];
        let (mut f, mut g) = rosenbrock(&x).unwrap();
        let mut opt = Lbfgs::new(10);
        let mut obj = rosenbrock;
        for _ in 0..200 {
            match opt.step(&mut obj, &mut x, &mut f, &mut g).unwrap() {
                LbfgsStatus::Progress { .. } => {}
                _ => break,
            }
        }
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6, "{x:?}");
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut x = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.05);
        for _ in 0..2000 {
            let g = x.clone();
            opt.step(&mut x, &g);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-3), "{x:?}");
    }

    #[test]
    fn lbfgs_reports_convergence_at_a_minimum() {
        let mut x = vec![1.0, 1.0];
        let (mut f, mut g) = rosenbrock(&x).unwrap();
        let mut opt = Lbfgs::new(5);
        let status = opt.step(&mut rosenbrock, &mut x, &mut f, &mut g).unwrap();
        assert_eq!(status, LbfgsStatus::Converged);
    }
}
