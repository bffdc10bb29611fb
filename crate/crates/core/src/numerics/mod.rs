//! Dense f64 numerics shared by every model: tensors, seeded random streams,
//! initializers, normalization/softmax kernels, the Adam optimizer and a
//! central-difference gradient checker.

mod adam;
mod gradcheck;
mod init;
pub(crate) mod linalg;
mod ops;
mod rng;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use init::{orthogonal_init, uniform_init};
pub(crate) use ops::standardize_in_place;
pub use ops::{
    layer_norm, layer_norm_backward, layer_norm_slice, sigmoid, softmax, softmax_backward,
    softmax_slice, LN_EPS,
};
pub use rng::Rng;
pub use tensor::Tensor;
