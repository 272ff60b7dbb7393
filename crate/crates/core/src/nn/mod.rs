//! Minimal deterministic neural-network toolkit: dense matrices, a taped
//! reverse-mode graph, a few layers and the Adam optimizer.

mod graph;
mod layers;
mod matrix;
mod params;

pub use graph::{Graph, Var};
pub use layers::{sinusoidal_embedding, Conv1d, LayerNorm, Linear, SelfAttention};
pub use matrix::Matrix;
pub use params::{Adam, ParamId, ParamStore, StepLr};

pub(crate) use graph::sigmoid;
