//! Dense tensors, the gradient tape, Adam and seeded randomness.

mod adam;
pub mod math;
mod rng;
mod tape;
mod tensor;

pub use adam::{AdamConfig, Moments, OptimizerState};
pub use rng::{gumbel_from_uniform, gumbel_noise, streams, Rng};
pub use tape::{Csr, Gradients, Tape, Var};
pub use tensor::Tensor;
