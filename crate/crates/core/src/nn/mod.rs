//! Minimal neural toolkit: dense tensors, reverse-mode differentiation,
//! the encoder/recurrent-fusion model, its four training objectives, and an
//! Adam optimizer. No external ML dependencies.

pub mod adam;
pub mod gradcheck;
pub mod graph;
pub mod loss;
pub mod model;
pub mod tensor;

pub use adam::{adam_step, AdamHyper, AdamState};
pub use graph::{Graph, Var};
pub use loss::{
    loss_kd_feat, loss_kd_output, loss_pose, loss_student, loss_teacher, loss_trans, LossWeights,
};
pub use model::{
    birnn_forward, load_checkpoint, mlp_forward, save_checkpoint, BatchInputs, BoundParams,
    ForwardOutputs, ModelConfig, ModelParams,
};
pub use tensor::Tensor;
