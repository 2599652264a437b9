//! Dense tensors, reverse-mode differentiation and the Adam optimizer.

mod adam;
mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState, Moments};
pub use gradcheck::{check_gradients, GradCheck};
pub use graph::{Graph, Var};
pub use params::{Parameter, ParameterSet};
pub use tensor::Tensor;
