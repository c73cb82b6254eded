//! Losses, Adam, pruning and densification, scene initialization, the
//! training loop and the finite-difference gradient checker.

mod adam;
mod config;
mod gradcheck;
mod housekeeping;
mod init;
mod loss;
mod train;

pub use adam::{adam_step, AdamMoments, AdamState, BETA1, BETA2, EPSILON};
pub use config::{LearningRates, TrainConfig, MIN_GAUSSIANS};
pub use gradcheck::{grad_check, grad_check_with, GradCheckReport, GroupError};
pub use housekeeping::{densify, prune, DensifyStats};
pub use init::{initialize_gaussians, initialize_scene, FALLBACK_GRID, INTENSITY_THRESHOLD};
pub use loss::{compute_loss, loss_and_gradients, LossReport};
pub use train::{evaluate, train, EvalRecord, IterationRecord, TrainLog, TrainOutcome, TrainState, Trainer};
