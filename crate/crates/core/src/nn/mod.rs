//! Fully connected tanh networks and the Adam optimizer over the graph engine.

mod adam;
mod mlp;

pub use adam::{Adam, AdamConfig};
pub use mlp::{Dropout, LayerNodes, Mlp, MlpConfig, MlpNodes};

use thiserror::Error;

use crate::autodiff::GraphError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: expected {expected} inputs, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{what}: expected length {expected}, got {got}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("non-finite gradient {value} for parameter {param}; update rejected")]
    NonFiniteGradient { param: String, value: f64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Names for ranges of a flat parameter vector, used in diagnostics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamLayout {
    blocks: Vec<(String, usize)>,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, len: usize) {
        self.blocks.push((name.into(), len));
    }

    pub fn extend(&mut self, prefix: &str, other: &ParamLayout) {
        for (name, len) in &other.blocks {
            let full = if prefix.is_empty() { name.clone() } else { format!("{prefix}.{name}") };
            self.push(full, *len);
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|(_, n)| n).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Human-readable name for flat index `idx`, e.g. `surrogate.l0.weight[5]`.
    pub fn describe(&self, mut idx: usize) -> String {
        for (name, len) in &self.blocks {
            if idx < *len {
                return format!("{name}[{idx}]");
            }
            idx -= len;
        }
        format!("param[{idx}]")
    }
}

#[cfg(test)]
mod tests;
