//! Fully connected embedding network with ReLU between layers and an L2
//! normalized output, plus the reverse-mode pass used for training.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

/// Output norms below this cannot be normalized.
pub const MIN_OUTPUT_NORM: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("input has {got} values, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("output vector has zero norm and cannot be normalized")]
    NormalizationDegenerate,
    #[error("invalid model shape: {0}")]
    Shape(String),
    #[error("model contains a non-finite weight")]
    NonFinite,
}

/// Dense layer `y = W x + b`, `W` stored row-major with `outputs` rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Fixed per-feature standardization applied before the first layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl InputNorm {
    /// Mean and inverse standard deviation of each column, with the standard
    /// deviation floored at `sd_floor` so near-constant features are not
    /// blown up.
    pub fn fit(data: &[Vec<f64>], sd_floor: f64) -> Self {
        let dim = data.first().map_or(0, Vec::len);
        let n = data.len().max(1) as f64;
        let mean: Vec<f64> = (0..dim)
            .map(|j| data.iter().map(|x| x[j]).sum::<f64>() / n)
            .collect();
        let scale = (0..dim)
            .map(|j| {
                let var = data.iter().map(|x| (x[j] - mean[j]).powi(2)).sum::<f64>() / n;
                1.0 / var.sqrt().max(sd_floor)
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) * s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub layers: Vec<Layer>,
    pub input_norm: Option<InputNorm>,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer (after normalization / activation).
    pub inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each layer.
    pub pre: Vec<Vec<f64>>,
    pub norm: f64,
    pub output: Vec<f64>,
}

impl ForwardCache {
    /// ReLU on/off pattern of every hidden unit; changes mark kinks.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let hidden = self.pre.len().saturating_sub(1);
        self.pre[..hidden]
            .iter()
            .flat_map(|z| z.iter().map(|&v| v > 0.0))
            .collect()
    }
}

/// Gradient with the same layout as the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(model: &EmbeddingModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Layer::zeros(l.inputs, l.outputs))
                .collect(),
        }
    }

    pub fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w *= s);
            l.bias.iter_mut().for_each(|b| *b *= s);
        }
    }

    /// Value at a flat parameter index (see [`EmbeddingModel::param`]).
    pub fn get(&self, index: usize) -> f64 {
        let (l, k) = locate(&self.layers, index);
        let layer = &self.layers[l];
        if k < layer.weights.len() {
            layer.weights[k]
        } else {
            layer.bias[k - layer.weights.len()]
        }
    }
}

fn locate(layers: &[Layer], mut index: usize) -> (usize, usize) {
    for (l, layer) in layers.iter().enumerate() {
        if index < layer.param_count() {
            return (l, index);
        }
        index -= layer.param_count();
    }
    panic!("parameter index out of range");
}

impl EmbeddingModel {
    pub fn new(layers: Vec<Layer>, input_norm: Option<InputNorm>) -> Result<Self, ModelError> {
        let model = Self { layers, input_norm };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.layers.is_empty() {
            return Err(ModelError::Shape("model has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.inputs == 0 || l.outputs == 0 {
                return Err(ModelError::Shape(format!("layer {i} has an empty side")));
            }
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(ModelError::Shape(format!(
                    "layer {i} arrays do not match {}x{}",
                    l.outputs, l.inputs
                )));
            }
            if i > 0 && self.layers[i - 1].outputs != l.inputs {
                return Err(ModelError::Shape(format!(
                    "layer {i} expects {} inputs but layer {} gives {}",
                    l.inputs,
                    i - 1,
                    self.layers[i - 1].outputs
                )));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite);
            }
        }
        if let Some(n) = &self.input_norm {
            if n.mean.len() != self.input_dim() || n.scale.len() != self.input_dim() {
                return Err(ModelError::Shape("input normalization width".into()));
            }
        }
        Ok(())
    }

    /// Scaled-uniform initialization: weights in `±sqrt(6 / fan_in)`, zero
    /// biases, drawn from a stream keyed by `seed`.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self, ModelError> {
        if dims.len() < 2 {
            return Err(ModelError::Shape("need input and output widths".into()));
        }
        let mut r = rng::stream(seed, "model-init", &[]);
        let layers = dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / w[0] as f64).sqrt();
                let mut layer = Layer::zeros(w[0], w[1]);
                for v in &mut layer.weights {
                    *v = limit * (2.0 * r.random::<f64>() - 1.0);
                }
                layer
            })
            .collect();
        Self::new(layers, None)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Parameters are indexed layer by layer, weights (row-major) then bias.
    pub fn param(&self, index: usize) -> f64 {
        let (l, k) = locate(&self.layers, index);
        let layer = &self.layers[l];
        if k < layer.weights.len() {
            layer.weights[k]
        } else {
            layer.bias[k - layer.weights.len()]
        }
    }

    pub fn set_param(&mut self, index: usize, value: f64) {
        let (l, k) = locate(&self.layers, index);
        let layer = &mut self.layers[l];
        if k < layer.weights.len() {
            layer.weights[k] = value;
        } else {
            let nw = layer.weights.len();
            layer.bias[k - nw] = value;
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ModelError> {
        Ok(self.forward_cached(x)?.output)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache, ModelError> {
        if x.len() != self.input_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let mut a = match &self.input_norm {
            Some(n) => n.apply(x),
            None => x.to_vec(),
        };
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&a);
            inputs.push(a);
            a = if i + 1 < self.layers.len() {
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
        }
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        // Also rejects a NaN norm.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if !(norm >= MIN_OUTPUT_NORM) {
            return Err(ModelError::NormalizationDegenerate);
        }
        let output = a.iter().map(|v| v / norm).collect();
        Ok(ForwardCache {
            inputs,
            pre,
            norm,
            output,
        })
    }

    /// Accumulate into `grads` the parameter gradient of a scalar whose
    /// gradient with respect to the normalized output is `d_out`. Returns
    /// the gradient with respect to the raw (unnormalized) input.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64], grads: &mut Gradients) -> Vec<f64> {
        let y = &cache.output;
        let dot: f64 = y.iter().zip(d_out).map(|(a, b)| a * b).sum();
        let mut delta: Vec<f64> = y
            .iter()
            .zip(d_out)
            .map(|(yi, gi)| (gi - yi * dot) / cache.norm)
            .collect();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if l + 1 < self.layers.len() {
                for (d, z) in delta.iter_mut().zip(&cache.pre[l]) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let input = &cache.inputs[l];
            let g = &mut grads.layers[l];
            for (o, &d) in delta.iter().enumerate() {
                g.bias[o] += d;
                if d != 0.0 {
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (w, x) in row.iter_mut().zip(input) {
                        *w += d * x;
                    }
                }
            }
            let mut next = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (n, w) in next.iter_mut().zip(row) {
                    *n += d * w;
                }
            }
            delta = next;
        }
        if let Some(n) = &self.input_norm {
            for (d, s) in delta.iter_mut().zip(&n.scale) {
                *d *= s;
            }
        }
        delta
    }

    /// Plain gradient-descent step.
    pub fn apply_step(&mut self, grads: &Gradients, learning_rate: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            for (w, d) in layer.weights.iter_mut().zip(&g.weights) {
                *w -= learning_rate * d;
            }
            for (b, d) in layer.bias.iter_mut().zip(&g.bias) {
                *b -= learning_rate * d;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer_passes_unit_input() {
        let mut layer = Layer::zeros(3, 3);
        for i in 0..3 {
            layer.weights[i * 3 + i] = 1.0;
        }
        let model = EmbeddingModel::new(vec![layer], None).unwrap();
        let x = [0.6, 0.0, 0.8];
        assert_eq!(model.forward(&x).unwrap(), x.to_vec());
    }

    #[test]
    fn zero_final_layer_is_degenerate() {
        let mut model = EmbeddingModel::init(&[4, 5, 3], 1).unwrap();
        let last = model.layers.last_mut().unwrap();
        last.weights.iter_mut().for_each(|w| *w = 0.0);
        assert_eq!(
            model.forward(&[1.0, 2.0, 3.0, 4.0]),
            Err(ModelError::NormalizationDegenerate)
        );
    }

    #[test]
    fn rejects_wrong_input_width() {
        let model = EmbeddingModel::init(&[4, 3], 1).unwrap();
        assert_eq!(
            model.forward(&[1.0]),
            Err(ModelError::DimensionMismatch { expected: 4, got: 1 })
        );
    }

    #[test]
    fn flat_parameter_indexing_round_trips() {
        let mut model = EmbeddingModel::init(&[2, 3, 2], 4).unwrap();
        assert_eq!(model.param_count(), 2 * 3 + 3 + 3 * 2 + 2);
        model.set_param(9, 7.5);
        assert_eq!(model.layers[1].weights[0], 7.5);
        model.set_param(16, -1.0);
        assert_eq!(model.layers[1].bias[1], -1.0);
        assert_eq!(model.param(16), -1.0);
    }
}
