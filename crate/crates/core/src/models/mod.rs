//! The conditional noise predictor, the classifier over its frozen encoder,
//! their training loops, and checkpoint I/O.

mod checkpoint;
mod classifier;
mod denoiser;
mod params;
mod train;

pub use checkpoint::{
    load_classifier, load_denoiser, save_classifier, save_denoiser, CheckpointError,
    CheckpointIndex,
};
pub use classifier::UniClassifier;
pub use denoiser::{timestep_embedding, Denoiser, DenoiserConfig, COND_DIM};
pub use params::{Bound, Params};
pub use train::{
    classifier_accuracy, train_classifier, train_denoiser, write_loss_csv, ClassifierData,
    DenoiserData, LossPoint, Optimizer, TrainConfig, TrainError, Trained,
};
