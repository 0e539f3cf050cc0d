//! Batched jet propagation and its reverse pass.
//!
//! All jet channels of a batch are stacked row-wise into one matrix
//! (`channels * points` rows, one column per unit) so that each layer costs a
//! single GEMM forward and two GEMMs backward.

use super::{NetworkConfig, Parameters};
use crate::error::{Error, Result};

/// Which input derivatives a batch carries.
///
/// `second` must be a subset of `first`: a pure second derivative along an
/// input needs the first derivative along the same input.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct JetSpec {
    pub first: Vec<usize>,
    pub second: Vec<usize>,
}

impl JetSpec {
    pub fn new(first: Vec<usize>, second: Vec<usize>) -> Self {
        Self { first, second }
    }

    pub fn values() -> Self {
        Self::default()
    }

    pub fn channels(&self) -> usize {
        1 + self.first.len() + self.second.len()
    }

    pub fn first_slot(&self, input: usize) -> Option<usize> {
        self.first.iter().position(|&i| i == input)
    }

    pub fn second_slot(&self, input: usize) -> Option<usize> {
        self.second.iter().position(|&i| i == input)
    }

    fn validate(&self, input_dim: usize) -> Result<()> {
        for &i in self.first.iter().chain(&self.second) {
            if i >= input_dim {
                return Err(Error::Shape(format!(
                    "derivative input {i} out of range for {input_dim} inputs"
                )));
            }
        }
        if self.second.iter().any(|i| !self.first.contains(i)) {
            return Err(Error::Config(
                "second derivative requested without the matching first derivative".into(),
            ));
        }
        Ok(())
    }

    /// First-derivative slot feeding each second-derivative channel.
    fn second_parents(&self) -> Vec<usize> {
        self.second
            .iter()
            .map(|i| self.first_slot(*i).expect("validated"))
            .collect()
    }
}

/// Jet channels of a batch of points: `channel x point x output`.
#[derive(Debug, Clone, PartialEq)]
pub struct JetBatch {
    n_points: usize,
    width: usize,
    spec: JetSpec,
    data: Vec<f64>,
}

impl JetBatch {
    pub fn zeros(n_points: usize, width: usize, spec: JetSpec) -> Self {
        let data = vec![0.0; spec.channels() * n_points * width];
        Self {
            n_points,
            width,
            spec,
            data,
        }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self::zeros(other.n_points, other.width, other.spec.clone())
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn spec(&self) -> &JetSpec {
        &self.spec
    }

    #[inline]
    fn idx(&self, channel: usize, point: usize, out: usize) -> usize {
        (channel * self.n_points + point) * self.width + out
    }

    #[inline]
    pub fn value(&self, point: usize, out: usize) -> f64 {
        self.data[self.idx(0, point, out)]
    }

    /// First derivative stored in slot `k` of `spec.first`.
    #[inline]
    pub fn first(&self, k: usize, point: usize, out: usize) -> f64 {
        self.data[self.idx(1 + k, point, out)]
    }

    /// Second derivative stored in slot `m` of `spec.second`.
    #[inline]
    pub fn second(&self, m: usize, point: usize, out: usize) -> f64 {
        self.data[self.idx(1 + self.spec.first.len() + m, point, out)]
    }

    #[inline]
    pub fn value_mut(&mut self, point: usize, out: usize) -> &mut f64 {
        let i = self.idx(0, point, out);
        &mut self.data[i]
    }

    #[inline]
    pub fn first_mut(&mut self, k: usize, point: usize, out: usize) -> &mut f64 {
        let i = self.idx(1 + k, point, out);
        &mut self.data[i]
    }

    #[inline]
    pub fn second_mut(&mut self, m: usize, point: usize, out: usize) -> &mut f64 {
        let i = self.idx(1 + self.spec.first.len() + m, point, out);
        &mut self.data[i]
    }

    /// Derivative along `input` (first order), panicking if not carried.
    pub fn d1(&self, input: usize, point: usize, out: usize) -> f64 {
        let k = self.spec.first_slot(input).expect("first derivative not carried");
        self.first(k, point, out)
    }

    pub fn d2(&self, input: usize, point: usize, out: usize) -> f64 {
        let m = self.spec.second_slot(input).expect("second derivative not carried");
        self.second(m, point, out)
    }

    pub fn d1_mut(&mut self, input: usize, point: usize, out: usize) -> &mut f64 {
        let k = self.spec.first_slot(input).expect("first derivative not carried");
        self.first_mut(k, point, out)
    }

    pub fn d2_mut(&mut self, input: usize, point: usize, out: usize) -> &mut f64 {
        let m = self.spec.second_slot(input).expect("second derivative not carried");
        self.second_mut(m, point, out)
    }
}

struct HiddenCache {
    /// Pre-activation, all channels stacked.
    pre: Vec<f64>,
    /// Post-activation, all channels stacked.
    post: Vec<f64>,
}

/// Forward jet pass over a batch, retaining what the reverse pass needs.
pub struct JetTrace {
    config: NetworkConfig,
    spec: JetSpec,
    n_points: usize,
    input: Vec<f64>,
    hidden: Vec<HiddenCache>,
    output: JetBatch,
}

/// `c = a * b + beta * c` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: the caller passes slices covering the strided extents; every
    // call site below derives the strides from the same dimensions.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl JetTrace {
    /// `points` is flat with `config.input_dim` coordinates per point.
    pub fn forward(
        config: &NetworkConfig,
        params: &Parameters,
        points: &[f64],
        spec: &JetSpec,
    ) -> Result<Self> {
        params.check(config)?;
        spec.validate(config.input_dim)?;
        let dim = config.input_dim;
        if points.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "{} coordinates is not a multiple of input_dim {dim}",
                points.len()
            )));
        }
        let n = points.len() / dim;
        let channels = spec.channels();
        let nf = spec.first.len();
        let parents = spec.second_parents();

        let affine = config.input_affine();
        let mut input = vec![0.0; channels * n * dim];
        for (slot, &x) in input[..n * dim].iter_mut().zip(points) {
            *slot = x;
        }
        if config.input_bounds.is_some() {
            for p in 0..n {
                for (d, &(scale, shift)) in affine.iter().enumerate() {
                    input[p * dim + d] = scale * points[p * dim + d] + shift;
                }
            }
        }
        for (k, &d) in spec.first.iter().enumerate() {
            let base = (1 + k) * n * dim;
            for p in 0..n {
                input[base + p * dim + d] = affine[d].0;
            }
        }

        let offsets = config.layer_offsets();
        let theta = params.as_slice();
        let mut hidden = Vec::with_capacity(offsets.len() - 1);
        let mut current = input.clone();
        let rows = channels * n;

        for (l, &(w, b, fan_in, fan_out)) in offsets.iter().enumerate() {
            let weights = &theta[w..b];
            let bias = &theta[b..b + fan_out];
            let mut pre = vec![0.0; rows * fan_out];
            gemm(
                rows,
                fan_in,
                fan_out,
                &current,
                fan_in as isize,
                1,
                weights,
                1,
                fan_in as isize,
                0.0,
                &mut pre,
            );
            for row in pre[..n * fan_out].chunks_exact_mut(fan_out) {
                for (z, bj) in row.iter_mut().zip(bias) {
                    *z += bj;
                }
            }
            if l + 1 == offsets.len() {
                let output = JetBatch {
                    n_points: n,
                    width: fan_out,
                    spec: spec.clone(),
                    data: pre,
                };
                return Ok(Self {
                    config: config.clone(),
                    spec: spec.clone(),
                    n_points: n,
                    input,
                    hidden,
                    output,
                });
            }
            let mut post = vec![0.0; rows * fan_out];
            let plane = n * fan_out;
            for i in 0..plane {
                let y = pre[i].tanh();
                let s = 1.0 - y * y;
                post[i] = y;
                for k in 0..nf {
                    post[(1 + k) * plane + i] = s * pre[(1 + k) * plane + i];
                }
                for (m, &k) in parents.iter().enumerate() {
                    let zd = pre[(1 + k) * plane + i];
                    let zdd = pre[(1 + nf + m) * plane + i];
                    post[(1 + nf + m) * plane + i] = s * zdd - 2.0 * y * s * zd * zd;
                }
            }
            current = post.clone();
            hidden.push(HiddenCache { pre, post });
        }
        unreachable!("network has at least one layer")
    }

    pub fn output(&self) -> &JetBatch {
        &self.output
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Accumulates d(loss)/d(params) into `grad`, given d(loss)/d(output jet).
    pub fn backward(&self, params: &[f64], adjoint: &JetBatch, grad: &mut [f64]) {
        assert_eq!(adjoint.spec, self.spec, "adjoint spec mismatch");
        assert_eq!(adjoint.n_points, self.n_points, "adjoint size mismatch");
        let n = self.n_points;
        let channels = self.spec.channels();
        let rows = channels * n;
        let nf = self.spec.first.len();
        let parents = self.spec.second_parents();
        let offsets = self.config.layer_offsets();

        let mut upstream = adjoint.data.clone();
        for l in (0..offsets.len()).rev() {
            let (w, b, fan_in, fan_out) = offsets[l];
            let layer_input: &[f64] = if l == 0 {
                &self.input
            } else {
                &self.hidden[l - 1].post
            };
            // dL/dW += G^T X
            gemm(
                fan_out,
                rows,
                fan_in,
                &upstream,
                1,
                fan_out as isize,
                layer_input,
                fan_in as isize,
                1,
                1.0,
                &mut grad[w..b],
            );
            let gb = &mut grad[b..b + fan_out];
            for row in upstream[..n * fan_out].chunks_exact(fan_out) {
                for (g, r) in gb.iter_mut().zip(row) {
                    *g += r;
                }
            }
            if l == 0 {
                break;
            }
            // dL/dX = G W
            let mut adj_post = vec![0.0; rows * fan_in];
            gemm(
                rows,
                fan_out,
                fan_in,
                &upstream,
                fan_out as isize,
                1,
                &params[w..b],
                fan_in as isize,
                1,
                0.0,
                &mut adj_post,
            );
            // through tanh jets of layer l-1 (width fan_in)
            let cache = &self.hidden[l - 1];
            let plane = n * fan_in;
            let mut adj_pre = vec![0.0; rows * fan_in];
            for i in 0..plane {
                let y = cache.post[i];
                let s = 1.0 - y * y;
                let ds = -2.0 * y * s;
                let mut a0 = adj_post[i] * s;
                for k in 0..nf {
                    let j = (1 + k) * plane + i;
                    adj_pre[j] = adj_post[j] * s;
                    a0 += adj_post[j] * cache.pre[j] * ds;
                }
                for (m, &k) in parents.iter().enumerate() {
                    let jd = (1 + k) * plane + i;
                    let jdd = (1 + nf + m) * plane + i;
                    let a = adj_post[jdd];
                    let zd = cache.pre[jd];
                    let zdd = cache.pre[jdd];
                    adj_pre[jdd] = a * s;
                    adj_pre[jd] += a * (-4.0 * y * s * zd);
                    a0 += a * (zdd * ds - 2.0 * zd * zd * s * (s - 2.0 * y * y));
                }
                adj_pre[i] = a0;
            }
            upstream = adj_pre;
        }
    }
}
