//! Minimal CPU training engine: 3x3 convolutions, dense layers, nearest
//! upsampling, batch norm and pointwise activations with hand-written
//! backward passes, plus Adam/SGD.

mod layers;
pub mod loss;
mod network;
mod optim;
mod real;
mod tensor;

pub use layers::Layer;
pub use network::{Network, NetworkSpec, Trace};
pub use optim::{Optimizer, OptimizerKind};
pub use real::{gemm, gemm_strided, MatRef, Real};
pub use tensor::Tensor;
