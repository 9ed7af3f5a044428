//! Label guessing, batch assembly, the training objective and prediction
//! diagnostics.

mod batch;
mod diagnostics;
mod guess;
mod loss;
mod mixup;
pub(crate) mod prob;
mod targets;

pub use batch::{
    make_rotation_batch, remixmatch_batch, rotation_batch_with_turns, strong_augment, BatchConfig,
    MixedBatch, Predictor, WeakAugment,
};
pub use diagnostics::{kl_divergence, mutual_info_decomposition, MutualInfo};
pub use guess::{GuessState, DEFAULT_WINDOW};
pub use loss::{
    cross_entropy, cross_entropy_logit_grad, loss_gradients, squared_error, squared_error_logit_grad,
    total_loss, GroupGradients, GroupOutputs, LossBreakdown, LossWeights,
};
pub use mixup::{mix_with_weight, mixup, sample_mix_weight, Example};
pub use prob::{mean_distribution, ProbVector, EPS};
pub use targets::{align, sharpen};
