//! Losses, optimizers and the deterministic minibatch training loop.

mod loss;
mod model;
mod optim;
mod train;

pub use loss::{bce_loss, mse_loss, LossKind, PROB_CLAMP};
pub use model::{DenseHead, Example, ModelGrads, SequenceModel};
pub use optim::{adam_step, sgd_step, AdamMoments, Optimizer, OptimizerKind};
pub use train::{batch_gradients, mean_loss, train, EpochRecord, TrainingConfig, TrainingTrace};
