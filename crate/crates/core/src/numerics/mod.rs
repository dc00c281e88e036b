//! Tensor math, seeded randomness, SGD and finite-difference checking.
//!
//! Layer forward/backward passes run in the parameter precision (`f32` for
//! training, `f64` when checking gradients); losses, norms, dot products and
//! finite differences accumulate in `f64`.

mod gradcheck;
mod ops;
mod real;
mod rng;
mod tensor;

pub use gradcheck::{gradient_check, relative_error, GradCheckReport};
pub use ops::{
    affine_backward, affine_backward_into, affine_forward, affine_forward_into, cosine_similarity,
    dot, l2_norm, sgd_step, Activation,
};
pub use real::{gemm, Real};
pub use rng::{derive_seed, Rng};
pub use tensor::Tensor;
