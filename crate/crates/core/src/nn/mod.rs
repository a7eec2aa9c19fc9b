//! Minimal differentiable tensor core: graph, layers, losses and Adam.

pub mod checkpoint;
pub mod ctc;
mod error;
pub mod gradcheck;
mod graph;
pub mod layers;
mod optim;
mod params;
mod tensor;

pub use error::{Result, TensorError};
pub use graph::{Gradients, Graph, NodeId};
pub use optim::{AdamState, TrainConfig};
pub use params::{GradStore, ParamId, ParamStore};
pub use tensor::Tensor;
