//! Small dense network with explicit forward/backward passes.
//!
//! The encoder is a stack of affine → batch-norm → activation blocks producing
//! the features `r`; the classifier maps `r` to logits and a separate
//! projection head maps `r` to contrastive embeddings `z`. Forward passes return
//! a [`ForwardPass`] whose tape is consumed by [`Network::backward`], so several
//! passes (clean view, augmented view, replay batch) can be backpropagated into
//! the same gradient accumulators.

mod gradcheck;
mod layers;
mod matrix;
mod network;
mod optim;

pub use gradcheck::finite_diff_check;
pub use layers::{Activation, AffineLayer, BatchNormLayer, BnMode, Layer, Param, ParamKind};
pub use matrix::{argmax, dot, l2_norm, softmax_backward, softmax_in_place, Matrix};
pub use network::{ForwardPass, HeadTape, Network, NetworkConfig, OutputGrads, ProjectionHead, Tape};
pub use optim::{sgd_step, sgd_step_filtered};

