//! Dense-tensor convolutional network with two readout heads.
//!
//! Per-sample activations are `(channels, height, width)` tensors; a batch is
//! processed sample by sample and gradients are reduced in a fixed order, so
//! training is bit-reproducible regardless of worker count.

mod adam;
mod checkpoint;
mod layers;
mod loss;
mod model;
mod tensor;
mod train;

pub use adam::*;
pub use checkpoint::*;
pub use layers::*;
pub use loss::*;
pub use model::*;
pub use tensor::*;
pub use train::*;
