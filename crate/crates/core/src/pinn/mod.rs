//! Residual, loss terms, adaptive balancing and the training loop.

mod residual;
mod train;

pub use residual::{loss_terms, residual, total_loss, DynamicsNodes, LossTerms, Residual, ResidualScales};
pub use train::{train, BatchEval, EpochRecord, Trainer, TrainedModel};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Graph, GraphError};
use crate::dynamics::{DeepHpm, DynamicsError, HpmInputs, VerhulstParams};
use crate::nn::{Mlp, NnError, ParamLayout};

#[derive(Debug, Error)]
pub enum PinnError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("sample {index} has a non-finite value")]
    NonFiniteSample { index: usize },
    #[error("sample {index} has {got} features, expected {expected}")]
    FeatureMismatch { index: usize, expected: usize, got: usize },
    #[error("non-finite loss at epoch {epoch}: L_u = {l_u}, L_f = {l_f}, L_ft = {l_ft}")]
    NonFiniteLoss { epoch: usize, l_u: f64, l_f: f64, l_ft: f64 },
    #[error("epoch {epoch}: {source}")]
    Optimizer { epoch: usize, source: NnError },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// How the three loss terms are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Balancing {
    /// Plain `L_u + L_f + L_ft`.
    Sum,
    /// `sum_k exp(-l_k) L_k + sum_k l_k` with trainable log-precisions `l_k`.
    #[default]
    AdpBal,
}

impl fmt::Display for Balancing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Balancing::Sum => "sum",
            Balancing::AdpBal => "adpbal",
        })
    }
}

impl FromStr for Balancing {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sum" => Ok(Balancing::Sum),
            "adpbal" => Ok(Balancing::AdpBal),
            other => Err(format!("unknown balancing `{other}` (expected sum or adpbal)")),
        }
    }
}

/// Reduction of per-sample squared errors within a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    SumOfSquares,
    #[default]
    Mean,
}

/// Trainable `lambda' = -log(lambda)` for the data, residual and residual
/// time-derivative terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_u: f64,
    pub lambda_f: f64,
    pub lambda_ft: f64,
}

impl LossWeights {
    pub fn as_array(&self) -> [f64; 3] {
        [self.lambda_u, self.lambda_f, self.lambda_ft]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        LossWeights { lambda_u: a[0], lambda_f: a[1], lambda_ft: a[2] }
    }

    /// `exp(-lambda')` per term.
    pub fn effective(&self) -> [f64; 3] {
        self.as_array().map(|l| (-l).exp())
    }
}

/// Rate model used in the residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DynamicsConfig {
    /// No physics; only the data term is trained.
    Baseline,
    Verhulst {
        #[serde(default = "defaults::r_init")]
        r_init: f64,
        #[serde(default = "defaults::k_init")]
        k_init: f64,
        #[serde(default = "defaults::c_init")]
        c_init: f64,
        #[serde(default = "defaults::u0")]
        u0: f64,
        #[serde(default = "defaults::k_min")]
        k_min: f64,
        #[serde(default = "defaults::k_max")]
        k_max: f64,
    },
    Deephpm {
        inputs: HpmInputs,
        #[serde(default = "defaults::layers")]
        hidden_layers: usize,
        #[serde(default = "defaults::neurons")]
        neurons: usize,
    },
}

mod defaults {
    use crate::dynamics::VerhulstParams;

    pub fn r_init() -> f64 {
        0.01
    }
    pub fn k_init() -> f64 {
        0.6
    }
    pub fn c_init() -> f64 {
        0.5 * VerhulstParams::DEFAULT_U0
    }
    pub fn u0() -> f64 {
        VerhulstParams::DEFAULT_U0
    }
    pub fn k_min() -> f64 {
        VerhulstParams::DEFAULT_K_MIN
    }
    pub fn k_max() -> f64 {
        VerhulstParams::DEFAULT_K_MAX
    }
    pub fn layers() -> usize {
        2
    }
    pub fn neurons() -> usize {
        128
    }
}

impl DynamicsConfig {
    pub fn verhulst() -> Self {
        DynamicsConfig::Verhulst {
            r_init: defaults::r_init(),
            k_init: defaults::k_init(),
            c_init: defaults::c_init(),
            u0: defaults::u0(),
            k_min: defaults::k_min(),
            k_max: defaults::k_max(),
        }
    }

    pub fn deephpm(inputs: HpmInputs, hidden_layers: usize, neurons: usize) -> Self {
        DynamicsConfig::Deephpm { inputs, hidden_layers, neurons }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DynamicsConfig::Baseline => "baseline",
            DynamicsConfig::Verhulst { .. } => "verhulst",
            DynamicsConfig::Deephpm { .. } => "deephpm",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub hidden_layers: usize,
    pub neurons: usize,
    pub dropout: f64,
    /// Feed the health features to the surrogate; otherwise `u(t)` only.
    pub use_features: bool,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig { hidden_layers: 2, neurons: 128, dropout: 0.2, use_features: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub balancing: Balancing,
    pub reduction: Reduction,
    pub dynamics: DynamicsConfig,
    pub surrogate: SurrogateConfig,
    /// Apply the batch's dropout masks in the residual passes too.
    pub dropout_in_residual: bool,
    /// Return the parameters with the lowest validation `L_u`.
    pub select_best: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2000,
            batch_size: 1024,
            learning_rate: 1e-3,
            seed: 0,
            balancing: Balancing::AdpBal,
            reduction: Reduction::Mean,
            dynamics: DynamicsConfig::Baseline,
            surrogate: SurrogateConfig::default(),
            dropout_in_residual: true,
            select_best: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), PinnError> {
        let bad = |m: String| Err(PinnError::InvalidConfig(m));
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if let DynamicsConfig::Verhulst { r_init, k_init, c_init, u0, k_min, k_max } = self.dynamics {
            VerhulstParams::with_bounds(r_init, k_init, c_init, u0, k_min, k_max)?;
        }
        Ok(())
    }
}

/// Trained (or initial) state of the rate model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DynamicsState {
    Baseline,
    Verhulst(VerhulstParams),
    Deephpm(DeepHpm),
}

impl DynamicsState {
    /// Initial state for `cfg`; DeepHPM weights use `seed`.
    pub fn init(cfg: &TrainConfig, features: usize, seed: u64) -> Result<Self, PinnError> {
        Ok(match &cfg.dynamics {
            DynamicsConfig::Baseline => DynamicsState::Baseline,
            DynamicsConfig::Verhulst { r_init, k_init, c_init, u0, k_min, k_max } => DynamicsState::Verhulst(
                VerhulstParams::with_bounds(*r_init, *k_init, *c_init, *u0, *k_min, *k_max)?,
            ),
            DynamicsConfig::Deephpm { inputs, hidden_layers, neurons } => DynamicsState::Deephpm(DeepHpm::new(
                inputs.clone(),
                features,
                *hidden_layers,
                *neurons,
                cfg.surrogate.dropout,
                seed,
            )?),
        })
    }

    pub fn params(&self) -> Vec<f64> {
        match self {
            DynamicsState::Baseline => Vec::new(),
            DynamicsState::Verhulst(p) => p.raw().to_vec(),
            DynamicsState::Deephpm(h) => h.net.params.clone(),
        }
    }

    pub fn set_params(&mut self, values: &[f64]) {
        match self {
            DynamicsState::Baseline => {}
            DynamicsState::Verhulst(p) => p.set_raw(values),
            DynamicsState::Deephpm(h) => h.net.params.copy_from_slice(values),
        }
    }

    pub fn layout(&self) -> ParamLayout {
        let mut l = ParamLayout::new();
        match self {
            DynamicsState::Baseline => {}
            DynamicsState::Verhulst(p) => l.extend("verhulst", &p.layout()),
            DynamicsState::Deephpm(h) => l.extend("hpm", &h.net.layout()),
        }
        l
    }

    pub fn bind(&self, g: &mut Graph) -> DynamicsNodes {
        match self {
            DynamicsState::Baseline => DynamicsNodes::Baseline,
            DynamicsState::Verhulst(p) => DynamicsNodes::Verhulst(p.bind(g)),
            DynamicsState::Deephpm(h) => DynamicsNodes::Deephpm { inputs: h.inputs.clone(), net: h.net.bind(g) },
        }
    }

    pub fn hpm_net(&self) -> Option<&Mlp> {
        match self {
            DynamicsState::Deephpm(h) => Some(&h.net),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests;
