//! Minimal neural-network kernels.
//!
//! Everything here is generic over [`Real`] so the same layer code runs in
//! `f32` for training/inference and in `f64` for finite-difference checks.

mod flops;
mod gradcheck;
mod init;
mod layers;
mod loss;
mod sgd;
mod tensor;

pub use flops::{FlopReport, FlopRow};
pub use gradcheck::{grad_check, GradCheckReport};
pub use init::{truncated_normal, truncated_normal_tensor, INIT_STDDEV};
pub use layers::{
    conv_backward, conv_forward, dropout_train, dropout_train_seeded, fc_backward, fc_forward,
    relu, relu_backward_inplace, relu_inplace, sigmoid, ConvSpec, Dropout, FcSpec,
};
pub use loss::{masked_cross_entropy, masked_logit_grad, PROB_EPS};
pub use sgd::{SgdConfig, SgdState};
pub use tensor::{ParamSet, Real, Tensor};

pub(crate) use layers::kernels;
