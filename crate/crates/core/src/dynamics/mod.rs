//! Rate models G for the degradation PDE: the constrained Verhulst law and
//! the DeepHPM network.

mod deephpm;
mod verhulst;

pub use deephpm::{deephpm_rate, DeepHpm, HpmInputs, HpmTerm, TermValues};
pub use verhulst::{verhulst_rate, VerhulstNodes, VerhulstParams};

use thiserror::Error;

use crate::autodiff::GraphError;
use crate::nn::NnError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("invalid Verhulst parameters: {0}")]
    InvalidParams(String),
    #[error("DeepHPM input term `{0}` is configured but no value was supplied")]
    MissingTerm(HpmTerm),
    #[error("unknown DeepHPM input term `{0}` (expected x, t, u, ux, uxx)")]
    UnknownTerm(String),
    #[error("DeepHPM needs at least one input term")]
    EmptyInputs,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}
