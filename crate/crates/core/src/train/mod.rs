//! Mini-batch SGD training, evaluation and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod engine;
pub mod sgd;

pub use checkpoint::{Checkpoint, RngState};
pub use config::TrainConfig;
pub use engine::{evaluate, fit_samples, predict_masks, train, Observer, TrainOutcome, TraceRow};
pub use sgd::{clip_grad_norm, Sgd};
