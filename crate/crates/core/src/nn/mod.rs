//! From-scratch dense network engine: layers, losses, reverse-mode
//! gradients, Adagrad, and a finite-difference gradient checker.

pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;

pub use gradcheck::{gradient_check, GradCheckReport, TensorCheck};
pub use layers::{
    affine_forward, attention_forward, batchnorm_forward, relu, residual_block_forward, sigmoid,
    softmax_rows, AffineParams, AttentionParams, BatchNormParams, Mode, ResidualBlockParams,
};
pub use loss::{anchored_loss, bce_loss, dice_loss, LossKind, LossValue, Objective};
pub use model::{ArchConfig, AttentionPlacement, ForwardCache, ModelParams, Tape};
pub use optim::{adagrad_step, Adagrad};
