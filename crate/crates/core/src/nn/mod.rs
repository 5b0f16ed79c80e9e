//! A small deterministic dense-network engine in f64: He-uniform
//! initialization, forward and backward passes, Adam, mean squared error,
//! early-stopped training, gradient checking and JSON checkpoints.
//!
//! Matrices are features × batch: each column is one sample.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod network;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{config_hash, Checkpoint, NetworkRecord};
pub use gradcheck::{check_gradients, GradCheckReport};
pub use network::{
    backprop, backward, forward, init_he_uniform, loss_mse, mse_grad, predict, Activation,
    Activations, DenseLayer, Gradients, LayerSpec, NetworkParams, NetworkSpec, Parameters,
};
pub use train::{fit, fit_objective, FitConfig, Objective, SupervisedTask, TrainRecord};
