use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{NnError, ParamLayout};
use crate::autodiff::{Graph, NodeId};

/// Shape of a fully connected tanh network with a linear output layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub neurons: usize,
    pub output_dim: usize,
    #[serde(default)]
    pub dropout: f64,
}

impl MlpConfig {
    pub fn new(input_dim: usize, hidden_layers: usize, neurons: usize, output_dim: usize) -> Self {
        MlpConfig { input_dim, hidden_layers, neurons, output_dim, dropout: 0.0 }
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout = p;
        self
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_dim == 0 {
            return Err(NnError::InvalidConfig("input_dim must be >= 1".into()));
        }
        if self.hidden_layers == 0 {
            return Err(NnError::InvalidConfig("hidden_layers must be >= 1".into()));
        }
        if self.neurons == 0 {
            return Err(NnError::InvalidConfig("neurons must be >= 1".into()));
        }
        if self.output_dim == 0 {
            return Err(NnError::InvalidConfig("output_dim must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NnError::InvalidConfig(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    /// (fan_in, fan_out) per layer, hidden layers first, output layer last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.input_dim;
        for _ in 0..self.hidden_layers {
            dims.push((fan_in, self.neurons));
            fan_in = self.neurons;
        }
        dims.push((fan_in, self.output_dim));
        dims
    }

    pub fn parameter_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| (i + 1) * o).sum()
    }
}

/// Network weights as plain numbers.
///
/// Layout per layer: weights row-major `[fan_out][fan_in]`, then biases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub config: MlpConfig,
    pub seed: u64,
    pub params: Vec<f64>,
}

impl Mlp {
    /// Xavier-normal weights, zero biases.
    pub fn xavier_normal(config: MlpConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(config.parameter_count());
        for (fan_in, fan_out) in config.layer_dims() {
            let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            params.extend((0..fan_in * fan_out).map(|_| normal.sample(&mut rng)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Mlp { config, seed, params })
    }

    pub fn from_params(config: MlpConfig, seed: u64, params: Vec<f64>) -> Result<Self, NnError> {
        config.validate()?;
        if params.len() != config.parameter_count() {
            return Err(NnError::LengthMismatch {
                what: "network parameters",
                expected: config.parameter_count(),
                got: params.len(),
            });
        }
        Ok(Mlp { config, seed, params })
    }

    pub fn layout(&self) -> ParamLayout {
        let mut layout = ParamLayout::new();
        for (l, (fan_in, fan_out)) in self.config.layer_dims().into_iter().enumerate() {
            layout.push(format!("l{l}.weight"), fan_in * fan_out);
            layout.push(format!("l{l}.bias"), fan_out);
        }
        layout
    }

    /// Registers every weight and bias as a parameter leaf of `g`.
    pub fn bind(&self, g: &mut Graph) -> MlpNodes {
        let mut it = self.params.iter();
        let layers = self
            .config
            .layer_dims()
            .into_iter()
            .map(|(fan_in, fan_out)| {
                let weights = (0..fan_in * fan_out).map(|_| g.parameter(*it.next().unwrap())).collect();
                let biases = (0..fan_out).map(|_| g.parameter(*it.next().unwrap())).collect();
                LayerNodes { fan_in, fan_out, weights, biases }
            })
            .collect();
        MlpNodes { layers, dropout: self.config.dropout }
    }

    /// Evaluation-mode forward pass on plain numbers.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        if x.len() != self.config.input_dim {
            return Err(NnError::DimensionMismatch { expected: self.config.input_dim, got: x.len() });
        }
        let dims = self.config.layer_dims();
        let last = dims.len() - 1;
        let mut h = x.to_vec();
        let mut offset = 0;
        for (l, (fan_in, fan_out)) in dims.into_iter().enumerate() {
            let w = &self.params[offset..offset + fan_in * fan_out];
            let b = &self.params[offset + fan_in * fan_out..offset + (fan_in + 1) * fan_out];
            offset += (fan_in + 1) * fan_out;
            h = (0..fan_out)
                .map(|o| {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    let z = row.iter().zip(&h).map(|(a, v)| a * v).sum::<f64>() + b[o];
                    if l == last { z } else { z.tanh() }
                })
                .collect();
        }
        Ok(h)
    }
}

/// How dropout is applied during a graph forward pass.
pub enum Dropout<'a, R: Rng> {
    /// Evaluation mode: activations pass through unchanged.
    Off,
    /// Fresh Bernoulli masks drawn from `R`, baked in as literals.
    Sample(&'a mut R),
    /// Externally owned mask leaves, one vector per hidden layer.
    Masks(&'a [Vec<NodeId>]),
}

impl Dropout<'_, ChaCha8Rng> {
    pub fn off() -> Self {
        Dropout::Off
    }
}

#[derive(Clone, Debug)]
pub struct LayerNodes {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weights: Vec<NodeId>,
    pub biases: Vec<NodeId>,
}

/// Parameter leaves of a network bound into one graph.
#[derive(Clone, Debug)]
pub struct MlpNodes {
    pub layers: Vec<LayerNodes>,
    dropout: f64,
}

impl MlpNodes {
    /// Parameter ids in the same flat order as [`Mlp::params`].
    pub fn param_ids(&self) -> Vec<NodeId> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    /// Input leaves (initialised to 1) that can carry dropout masks.
    pub fn mask_leaves(&self, g: &mut Graph) -> Vec<Vec<NodeId>> {
        let hidden = &self.layers[..self.layers.len() - 1];
        hidden.iter().map(|l| (0..l.fan_out).map(|_| g.input(1.0)).collect()).collect()
    }

    /// Inverted-dropout mask values: 0 with probability p, else 1/(1-p).
    pub fn sample_masks<R: Rng>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        let p = self.dropout;
        let hidden = &self.layers[..self.layers.len() - 1];
        if p == 0.0 {
            return hidden.iter().map(|l| vec![1.0; l.fan_out]).collect();
        }
        let keep = Bernoulli::new(1.0 - p).expect("p in [0,1)");
        let scale = 1.0 / (1.0 - p);
        hidden
            .iter()
            .map(|l| (0..l.fan_out).map(|_| if keep.sample(rng) { scale } else { 0.0 }).collect())
            .collect()
    }

    pub fn forward<R: Rng>(
        &self,
        g: &mut Graph,
        inputs: &[NodeId],
        mut dropout: Dropout<'_, R>,
    ) -> Result<Vec<NodeId>, NnError> {
        if inputs.len() != self.input_dim() {
            return Err(NnError::DimensionMismatch { expected: self.input_dim(), got: inputs.len() });
        }
        let last = self.layers.len() - 1;
        let mut h = inputs.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.fan_out);
            for o in 0..layer.fan_out {
                let row = &layer.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                let mut acc = layer.biases[o];
                for (&w, &x) in row.iter().zip(&h) {
                    let p = g.mul(w, x);
                    acc = g.add(acc, p);
                }
                next.push(acc);
            }
            if l < last {
                for (o, z) in next.iter_mut().enumerate() {
                    let a = g.tanh(*z);
                    *z = match &mut dropout {
                        Dropout::Off => a,
                        Dropout::Masks(masks) => g.mul(a, masks[l][o]),
                        Dropout::Sample(rng) => {
                            if self.dropout == 0.0 {
                                a
                            } else {
                                let keep = rng.random::<f64>() >= self.dropout;
                                let m = if keep { 1.0 / (1.0 - self.dropout) } else { 0.0 };
                                g.scale(a, m)
                            }
                        }
                    };
                }
            }
            h = next;
        }
        Ok(h)
    }
}
