//! Dense tensors, reverse-mode differentiation, parameter groups and Adam.

mod checkpoint;
mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use checkpoint::{decode_params, encode_params, load_into, read_params, save_params};
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use params::{adam_step, Adam, AdamConfig, Bindings, Param, ParamGroup};
pub use tensor::Tensor;

/// Draw a `fan_in x fan_out` weight from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn init_weight(fan_in: usize, fan_out: usize, rng: &mut impl rand::Rng) -> Tensor {
    Tensor::uniform(&[fan_in, fan_out], 1.0 / (fan_in as f64).sqrt(), rng)
}

pub fn init_bias(n: usize) -> Tensor {
    Tensor::zeros(&[n])
}
