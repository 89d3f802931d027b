//! Masked-item training: objective, optimiser, schedule and the epoch loop.

mod config;
mod objective;
mod optim;
mod trainer;

pub use config::TrainConfig;
pub use objective::{mask_sequence, mlm_loss, MaskedSequence};
pub use optim::{adam_step, cosine_lr, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use trainer::{train, EpochRecord, TrainLog};
