//! Dense-tensor arithmetic with reverse-mode differentiation and the shared
//! neural primitives built on top of it.

pub mod gradcheck;
pub mod nn;
pub mod tensor;

pub use nn::{
    glorot_uniform, maybe_dropout, zero_masked_rows, Ctx, EncoderLayer, LayerNorm, LinearLayer,
    Mlp, MultiHeadAttention, NormMode, ResidualMode,
};
pub use tensor::{grad_enabled, no_grad, Scalar, Tensor};
