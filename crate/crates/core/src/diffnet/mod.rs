//! Feed-forward tanh networks with input-derivative jets.
//!
//! Derivatives with respect to the network *inputs* (the PDE coordinates) are
//! propagated forward alongside the values: every hidden unit carries its
//! value, first directional derivatives and (optionally) pure second
//! derivatives. Gradients of a scalar loss with respect to the *parameters*
//! are accumulated in reverse through that same jet computation, see
//! [`JetTrace::backward`].
//!
//! Parameter layout: layers are stored in order; each layer is its weight
//! matrix (`fan_out x fan_in`, row-major) followed by its bias vector.

mod batch;

pub use batch::{JetBatch, JetSpec, JetTrace};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub activation: Activation,
    /// Optional `[lo, hi]` per input; inputs are mapped affinely onto
    /// `[-1, 1]` before the first layer. Derivatives stay with respect to
    /// the unmapped coordinates.
    #[serde(default)]
    pub input_bounds: Option<Vec<[f64; 2]>>,
}

impl NetworkConfig {
    pub fn new(
        input_dim: usize,
        output_dim: usize,
        hidden_layers: usize,
        hidden_width: usize,
    ) -> Result<Self> {
        let config = Self {
            input_dim,
            output_dim,
            hidden_layers,
            hidden_width,
            activation: Activation::Tanh,
            input_bounds: None,
        };
        config.validate()?;
        Ok(config)
    }

    /// Six hidden layers of 70 units, two outputs `(u, v)`.
    pub fn schrodinger() -> Self {
        Self::new(2, 2, 6, 70).expect("static config")
    }

    /// Four hidden layers of 40 units, one output `u`.
    pub fn burgers() -> Self {
        Self::new(2, 1, 4, 40).expect("static config")
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("network needs at least one input and output".into()));
        }
        if let Some(bounds) = &self.input_bounds {
            if bounds.len() != self.input_dim || bounds.iter().any(|[lo, hi]| !(lo < hi)) {
                return Err(Error::Config("input bounds need lo < hi for every input".into()));
            }
        }
        if self.hidden_layers == 0 || self.hidden_width == 0 {
            return Err(Error::Config(format!(
                "hidden_layers and hidden_width must be >= 1 (got {} x {})",
                self.hidden_layers, self.hidden_width
            )));
        }
        Ok(())
    }

    pub fn with_input_bounds(mut self, bounds: Vec<[f64; 2]>) -> Result<Self> {
        self.input_bounds = Some(bounds);
        self.validate()?;
        Ok(self)
    }

    /// `(scale, shift)` per input so that the mapped input is `scale * x + shift`.
    pub(crate) fn input_affine(&self) -> Vec<(f64, f64)> {
        match &self.input_bounds {
            None => vec![(1.0, 0.0); self.input_dim],
            Some(bounds) => bounds
                .iter()
                .map(|&[lo, hi]| {
                    let scale = 2.0 / (hi - lo);
                    (scale, -1.0 - lo * scale)
                })
                .collect(),
        }
    }

    /// Widths of every layer including input and output.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_layers + 2);
        sizes.push(self.input_dim);
        sizes.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        sizes.push(self.output_dim);
        sizes
    }

    pub fn num_params(&self) -> usize {
        self.layer_sizes()
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// `(weight_offset, bias_offset, fan_in, fan_out)` for each layer.
    pub(crate) fn layer_offsets(&self) -> Vec<(usize, usize, usize, usize)> {
        let mut offset = 0;
        self.layer_sizes()
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let entry = (offset, offset + fan_in * fan_out, fan_in, fan_out);
                offset += fan_in * fan_out + fan_out;
                entry
            })
            .collect()
    }
}

/// One dense layer in unflattened form.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub fan_in: usize,
    pub fan_out: usize,
    /// `fan_out x fan_in`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    /// `W x + b`, no activation.
    pub fn affine(&self, input: &[f64]) -> Vec<f64> {
        (0..self.fan_out)
            .map(|o| {
                let row = &self.weights[o * self.fan_in..(o + 1) * self.fan_in];
                row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + self.bias[o]
            })
            .collect()
    }
}

/// Flat parameter vector of a network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Parameters(pub Vec<f64>);

impl Parameters {
    pub fn zeros(config: &NetworkConfig) -> Self {
        Self(vec![0.0; config.num_params()])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn check(&self, config: &NetworkConfig) -> Result<()> {
        if self.0.len() != config.num_params() {
            return Err(Error::Shape(format!(
                "parameter vector has {} entries, network needs {}",
                self.0.len(),
                config.num_params()
            )));
        }
        if let Some(i) = self.0.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i} = {}", self.0[i])));
        }
        Ok(())
    }

    pub fn unflatten(&self, config: &NetworkConfig) -> Result<Vec<DenseLayer>> {
        if self.0.len() != config.num_params() {
            return Err(Error::Shape(format!(
                "parameter vector has {} entries, network needs {}",
                self.0.len(),
                config.num_params()
            )));
        }
        Ok(config
            .layer_offsets()
            .into_iter()
            .map(|(w, b, fan_in, fan_out)| DenseLayer {
                fan_in,
                fan_out,
                weights: self.0[w..b].to_vec(),
                bias: self.0[b..b + fan_out].to_vec(),
            })
            .collect())
    }

    pub fn flatten(layers: &[DenseLayer]) -> Self {
        let mut flat = Vec::new();
        for layer in layers {
            flat.extend_from_slice(&layer.weights);
            flat.extend_from_slice(&layer.bias);
        }
        Self(flat)
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(config: &NetworkConfig, seed: u64) -> Parameters {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = vec![0.0; config.num_params()];
    for (w, b, fan_in, fan_out) in config.layer_offsets() {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for p in &mut params[w..b] {
            *p = rng.random_range(-bound..=bound);
        }
    }
    Parameters(params)
}

/// Network output at a single point.
pub fn forward(params: &Parameters, config: &NetworkConfig, point: &[f64]) -> Result<Vec<f64>> {
    Ok(forward_jet(params, config, point, &[])?.value)
}

/// Value and input derivatives (first and pure second) at a single point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: Vec<f64>,
    /// Requested input indices, in the order their derivatives are stored.
    pub inputs: Vec<usize>,
    /// `d1[k][o]` is d(output o)/d(input inputs[k]).
    pub d1: Vec<Vec<f64>>,
    /// `d2[k][o]` is d^2(output o)/d(input inputs[k])^2.
    pub d2: Vec<Vec<f64>>,
}

impl Jet2 {
    pub fn d1(&self, output: usize, input: usize) -> f64 {
        let k = self.slot(input);
        self.d1[k][output]
    }

    pub fn d2(&self, output: usize, input: usize) -> f64 {
        let k = self.slot(input);
        self.d2[k][output]
    }

    fn slot(&self, input: usize) -> usize {
        self.inputs
            .iter()
            .position(|&i| i == input)
            .unwrap_or_else(|| panic!("derivative along input {input} was not requested"))
    }
}

pub fn forward_jet(
    params: &Parameters,
    config: &NetworkConfig,
    point: &[f64],
    derivative_inputs: &[usize],
) -> Result<Jet2> {
    if point.len() != config.input_dim {
        return Err(Error::Shape(format!(
            "point has {} coordinates, network expects {}",
            point.len(),
            config.input_dim
        )));
    }
    let spec = JetSpec::new(derivative_inputs.to_vec(), derivative_inputs.to_vec());
    let trace = JetTrace::forward(config, params, point, &spec)?;
    let out = trace.output();
    let value = (0..config.output_dim).map(|o| out.value(0, o)).collect();
    let d1 = (0..derivative_inputs.len())
        .map(|k| (0..config.output_dim).map(|o| out.first(k, 0, o)).collect())
        .collect();
    let d2 = (0..derivative_inputs.len())
        .map(|k| (0..config.output_dim).map(|o| out.second(k, 0, o)).collect())
        .collect();
    Ok(Jet2 {
        value,
        inputs: derivative_inputs.to_vec(),
        d1,
        d2,
    })
}

/// A scalar objective built from network jets at fixed point sets.
///
/// `queries` names the point sets (flat, `input_dim` stride) and the jet
/// channels each one needs. `evaluate` receives the jets in the same order,
/// returns the loss and writes d(loss)/d(jet entry) into `adjoints`. Terms
/// that depend on the parameters directly add their gradient to `param_grad`.
pub trait JetObjective {
    fn queries(&self) -> Vec<(Vec<f64>, JetSpec)>;

    fn evaluate(
        &self,
        params: &[f64],
        jets: &[JetBatch],
        adjoints: &mut [JetBatch],
        param_grad: &mut [f64],
    ) -> f64;
}

/// Loss value and its gradient with respect to every parameter.
pub fn loss_gradient(
    params: &Parameters,
    config: &NetworkConfig,
    objective: &dyn JetObjective,
) -> Result<(f64, Vec<f64>)> {
    params.check(config)?;
    let traces = objective
        .queries()
        .iter()
        .map(|(points, spec)| JetTrace::forward(config, params, points, spec))
        .collect::<Result<Vec<_>>>()?;
    let jets: Vec<JetBatch> = traces.iter().map(|t| t.output().clone()).collect();
    let mut adjoints: Vec<JetBatch> = jets.iter().map(JetBatch::zeros_like).collect();
    let mut grad = vec![0.0; params.len()];
    let loss = objective.evaluate(params.as_slice(), &jets, &mut adjoints, &mut grad);
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss = {loss}")));
    }
    for (trace, adjoint) in traces.iter().zip(&adjoints) {
        trace.backward(params.as_slice(), adjoint, &mut grad);
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_follows_layout() {
        let config = NetworkConfig::schrodinger();
        let expected = 2 * 70 + 70 + 5 * (70 * 70 + 70) + 70 * 2 + 2;
        assert_eq!(config.num_params(), expected);
        assert_eq!(init_params(&config, 7).len(), 25_202);
        assert_eq!(NetworkConfig::burgers().num_params(), 2 * 40 + 40 + 3 * (40 * 40 + 40) + 41);
    }

    #[test]
    fn init_is_deterministic_and_glorot_bounded() {
        let config = NetworkConfig::burgers();
        assert_eq!(init_params(&config, 11), init_params(&config, 11));
        assert_ne!(init_params(&config, 11), init_params(&config, 12));
        let params = init_params(&config, 3);
        for (w, b, fan_in, fan_out) in config.layer_offsets() {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            assert!(params.0[w..b].iter().all(|v| v.abs() <= bound));
            assert!(params.0[b..b + fan_out].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn rejects_degenerate_configs() {
        assert!(NetworkConfig::new(2, 1, 0, 10).is_err());
        assert!(NetworkConfig::new(2, 1, 3, 0).is_err());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let config = NetworkConfig::new(2, 2, 3, 8).unwrap();
        let params = Parameters::zeros(&config);
        let jet = forward_jet(&params, &config, &[0.4, -1.2], &[0, 1]).unwrap();
        assert_eq!(jet.value, vec![0.0, 0.0]);
        assert!(jet.d1.iter().chain(&jet.d2).flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_affine_layer_is_identity() {
        let layer = DenseLayer {
            fan_in: 3,
            fan_out: 3,
            weights: vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            bias: vec![0.0; 3],
        };
        assert_eq!(layer.affine(&[0.3, -2.0, 5.5]), vec![0.3, -2.0, 5.5]);
    }

    #[test]
    fn single_tanh_unit_matches_closed_form() {
        // one hidden unit, output = that unit
        let config = NetworkConfig::new(2, 1, 1, 1).unwrap();
        let (w0, w1, b) = (0.7, -1.3, 0.2);
        let params = Parameters(vec![w0, w1, b, 1.0, 0.0]);
        let x = [0.5, 0.25];
        let y: f64 = (w0 * x[0] + w1 * x[1] + b).tanh();
        let jet = forward_jet(&params, &config, &x, &[0, 1]).unwrap();
        let s = 1.0 - y * y;
        assert!((jet.value[0] - y).abs() < 1e-15);
        for (i, w) in [(0, w0), (1, w1)] {
            assert!((jet.d1(0, i) - w * s).abs() < 1e-15);
            assert!((jet.d2(0, i) - (-2.0 * y * s * w * w)).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_params_are_rejected() {
        let config = NetworkConfig::new(2, 1, 1, 2).unwrap();
        let mut params = init_params(&config, 0);
        params.0[1] = f64::NAN;
        assert!(matches!(
            forward(&params, &config, &[0.0, 0.0]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn wrong_point_dimension_is_rejected() {
        let config = NetworkConfig::burgers();
        let params = init_params(&config, 0);
        assert!(forward(&params, &config, &[0.0]).is_err());
    }
}
