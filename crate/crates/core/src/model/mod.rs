//! Feed-forward mean/std regression head.
//!
//! The network maps a feature vector through `hidden_dims` dense layers to two
//! raw outputs. `mu` is the first raw output unchanged; `sigma` is
//! `sigma_map(raw_sigma) + sigma_floor`, which keeps every predicted spread at
//! or above the floor.

mod checkpoint;
mod train;

pub use checkpoint::{
    load_model, read_model, save_model, write_model, Checkpoint, CHECKPOINT_VERSION,
};
pub use train::{train, EpochRecord, OptimizerKind, TrainConfig, TrainingLog};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{ensure_finite, JamError, Result};
use crate::loss::{loss_forward_backward, LossBreakdown, LossConfig, PredictionBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SigmaMap {
    Softplus,
    Exp,
}

impl SigmaMap {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            SigmaMap::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            SigmaMap::Exp => x.exp(),
        }
    }

    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            SigmaMap::Softplus => 1.0 / (1.0 + (-x).exp()),
            SigmaMap::Exp => x.exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub sigma_map: SigmaMap,
    /// Lower bound added to every predicted sigma, years.
    pub sigma_floor: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            input_dim: 16,
            hidden_dims: vec![64, 32],
            activation: Activation::Relu,
            sigma_map: SigmaMap::Softplus,
            sigma_floor: 0.05,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(JamError::InvalidConfig(
                "model.input_dim must be >= 1".into(),
            ));
        }
        if self.hidden_dims.contains(&0) {
            return Err(JamError::InvalidConfig(format!(
                "model.hidden_dims entries must be >= 1, got {:?}",
                self.hidden_dims
            )));
        }
        if !(self.sigma_floor.is_finite() && self.sigma_floor > 0.0) {
            return Err(JamError::InvalidConfig(format!(
                "model.sigma_floor must be > 0, got {}",
                self.sigma_floor
            )));
        }
        Ok(())
    }

    /// `(inputs, outputs)` per dense layer, ending in the two raw outputs.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.hidden_dims);
        widths.push(2);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// One dense layer; `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layers: Vec<Layer>,
}

impl ModelParams {
    pub fn zeros(spec: &ModelSpec) -> Self {
        Self {
            layers: spec
                .layer_shapes()
                .into_iter()
                .map(|(i, o)| Layer::zeros(i, o))
                .collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// All parameters in a fixed order: per layer, weights then bias.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Checks the shape chain against `spec` and that every value is finite.
    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        let shapes = spec.layer_shapes();
        if shapes.len() != self.layers.len() {
            return Err(JamError::Shape(format!(
                "expected {} layers, found {}",
                shapes.len(),
                self.layers.len()
            )));
        }
        for (k, (layer, (inputs, outputs))) in self.layers.iter().zip(shapes).enumerate() {
            if layer.inputs != inputs
                || layer.outputs != outputs
                || layer.weights.len() != inputs * outputs
                || layer.bias.len() != outputs
            {
                return Err(JamError::Shape(format!(
                    "layer {k}: expected {inputs}->{outputs} with {} weights and {outputs} biases, \
                     found {}->{} with {} weights and {} biases",
                    inputs * outputs,
                    layer.inputs,
                    layer.outputs,
                    layer.weights.len(),
                    layer.bias.len()
                )));
            }
            ensure_finite("layer weights", &layer.weights)?;
            ensure_finite("layer bias", &layer.bias)?;
        }
        Ok(())
    }
}

/// Per-sample model outputs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Outputs {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl Outputs {
    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    params: ModelParams,
}

impl Model {
    pub fn new(spec: ModelSpec, params: ModelParams) -> Result<Self> {
        spec.validate()?;
        params.validate(&spec)?;
        Ok(Self { spec, params })
    }

    /// Glorot-uniform weights, zero biases, and a `+1` bias on the raw sigma
    /// output so the initial spread is about 1.3 years under softplus.
    pub fn init<R: Rng + ?Sized>(spec: ModelSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut params = ModelParams::zeros(&spec);
        for layer in &mut params.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..=limit);
            }
        }
        params.layers.last_mut().expect("output layer").bias[1] = 1.0;
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    fn check_features(&self, features: &[f64]) -> Result<usize> {
        let d = self.spec.input_dim;
        if !features.len().is_multiple_of(d) {
            return Err(JamError::Shape(format!(
                "feature buffer of length {} is not a multiple of input_dim {d}",
                features.len()
            )));
        }
        ensure_finite("features", features)?;
        Ok(features.len() / d)
    }

    /// Runs a row-major `n x input_dim` feature matrix through the network.
    pub fn forward(&self, features: &[f64]) -> Result<Outputs> {
        let n = self.check_features(features)?;
        let raw = self.propagate(features, n, None);
        Ok(self.map_outputs(&raw))
    }

    pub fn predict(&self, data: &Dataset) -> Result<Outputs> {
        if data.input_dim() != self.spec.input_dim {
            return Err(JamError::Shape(format!(
                "dataset has {} features, model expects {}",
                data.input_dim(),
                self.spec.input_dim
            )));
        }
        self.forward(&data.features_flat())
    }

    fn map_outputs(&self, raw: &[f64]) -> Outputs {
        let mut out = Outputs {
            mu: Vec::with_capacity(raw.len() / 2),
            sigma: Vec::with_capacity(raw.len() / 2),
        };
        for pair in raw.chunks_exact(2) {
            out.mu.push(pair[0]);
            out.sigma
                .push(self.spec.sigma_map.apply(pair[1]) + self.spec.sigma_floor);
        }
        out
    }

    /// Dense forward pass. When `trace` is given, the input and every hidden
    /// activation are recorded for backpropagation. Returns raw `n x 2`.
    fn propagate(
        &self,
        features: &[f64],
        n: usize,
        mut trace: Option<&mut Vec<Vec<f64>>>,
    ) -> Vec<f64> {
        let last = self.params.layers.len() - 1;
        let mut current = features.to_vec();
        for (k, layer) in self.params.layers.iter().enumerate() {
            let mut next = vec![0.0; n * layer.outputs];
            for row in 0..n {
                let x = &current[row * layer.inputs..(row + 1) * layer.inputs];
                let y = &mut next[row * layer.outputs..(row + 1) * layer.outputs];
                for (o, out) in y.iter_mut().enumerate() {
                    let w = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    let z = layer.bias[o] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                    *out = if k == last {
                        z
                    } else {
                        self.spec.activation.apply(z)
                    };
                }
            }
            if let Some(t) = trace.as_deref_mut() {
                t.push(std::mem::take(&mut current));
            }
            current = next;
        }
        current
    }

    /// Mean loss over the given rows and its gradient with respect to every
    /// parameter (same layout as [`ModelParams`]).
    pub fn loss_and_gradient(
        &self,
        features: &[f64],
        targets: &[f64],
        loss_cfg: &LossConfig,
    ) -> Result<(LossBreakdown, ModelParams)> {
        let n = self.check_features(features)?;
        let mut trace = Vec::with_capacity(self.params.layers.len());
        let raw = self.propagate(features, n, Some(&mut trace));
        let out = self.map_outputs(&raw);
        let batch = PredictionBatch::new(&out.mu, &out.sigma, targets, loss_cfg)?;
        let (loss, dloss) = loss_forward_backward(&batch, loss_cfg)?;

        let mut delta: Vec<f64> = Vec::with_capacity(n * 2);
        for i in 0..n {
            delta.push(dloss.mu[i]);
            delta.push(dloss.sigma[i] * self.spec.sigma_map.derivative(raw[2 * i + 1]));
        }

        let mut grads = ModelParams::zeros(&self.spec);
        for k in (0..self.params.layers.len()).rev() {
            let layer = &self.params.layers[k];
            let input = &trace[k];
            let g = &mut grads.layers[k];
            for row in 0..n {
                let x = &input[row * layer.inputs..(row + 1) * layer.inputs];
                let d = &delta[row * layer.outputs..(row + 1) * layer.outputs];
                for (o, &dz) in d.iter().enumerate() {
                    if dz == 0.0 {
                        continue;
                    }
                    g.bias[o] += dz;
                    let gw = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (gwi, xi) in gw.iter_mut().zip(x) {
                        *gwi += dz * xi;
                    }
                }
            }
            if k == 0 {
                break;
            }
            // input[k] holds the activation outputs of layer k-1.
            let mut prev = vec![0.0; n * layer.inputs];
            for row in 0..n {
                let d = &delta[row * layer.outputs..(row + 1) * layer.outputs];
                let p = &mut prev[row * layer.inputs..(row + 1) * layer.inputs];
                for (o, &dz) in d.iter().enumerate() {
                    if dz == 0.0 {
                        continue;
                    }
                    let w = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (pi, wi) in p.iter_mut().zip(w) {
                        *pi += dz * wi;
                    }
                }
                let act = &input[row * layer.inputs..(row + 1) * layer.inputs];
                for (pi, &a) in p.iter_mut().zip(act) {
                    *pi *= self.spec.activation.derivative_from_output(a);
                }
            }
            delta = prev;
        }
        Ok((loss, grads))
    }
}
