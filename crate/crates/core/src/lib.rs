//! Physics-informed neural networks for lithium-ion battery prognostics.

pub mod autodiff;
pub mod data;
pub mod dynamics;
pub mod harness;
pub mod nn;
pub mod pinn;
pub mod synth;
