//! Dense-tensor kernel: layers with hand-written backward passes, plain SGD,
//! and exact parameter snapshots.

mod checkpoint;
mod gradcheck;
pub mod layers;
mod params;
mod tensor;

use rand::Rng;

pub use checkpoint::{FORMAT_VERSION, MAGIC};
pub use gradcheck::{grad_check, GradCheckReport, FULL_CHECK_LIMIT};
pub use layers::{
    affine_backward, affine_sigmoid, bce_loss, conv1d_maxpool, conv1d_maxpool_backward, conv1d_maxpool_with,
    embedding_backward, embedding_lookup, sigmoid, ConvTrace, ConvWeights, LOG_EPS,
};
pub use params::{Direction, Param, ParamSet, ParamSnapshot, SgdConfig};
pub use tensor::Tensor;

/// Glorot-uniform initialization: `U(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(shape, a, rng)
}

/// `U(-a, a)` entries.
pub fn uniform(shape: &[usize], a: f64, rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-a..=a)).collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}
