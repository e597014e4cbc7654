//! Dense network substrate: matrices, MLP forward/backward, Adam, Polyak
//! averaging, checkpoints and a finite-difference gradient checker.

mod adam;
mod checkpoint;
mod gradcheck;
mod matrix;
mod mlp;
mod scalar;
mod trainable;

pub use adam::{polyak, target_update, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use gradcheck::{grad_check, grad_check_param_count, max_rel_error, LossDescriptor, FD_STEP, REL_ERROR_FLOOR};
pub use matrix::Matrix;
pub use mlp::{gelu, gelu_grad, FinalActivation, MlpCache, MlpConfig, MlpParams, LAYER_NORM_EPS};
pub use scalar::{dot8, erf_f32, exp_neg_f32, sum8, Scalar};
pub use trainable::TrainNet;
