//! Forward noising, the noise-prediction objective, and guided reverse
//! samplers.

mod latent;
mod objective;
mod sampler;
mod schedule;

pub use latent::{latent_to_pixels, pixels_to_latent, LATENT_MAX, LATENT_MIN};
pub use objective::{denoising_loss, forward_diffuse, NoisyBatch};
pub use sampler::{
    ddim_step, ddim_step_to, ddpm_step, guided_epsilon, sample, sample_batch, DiffusionState, GuidanceConfig,
    GuidanceScore, NoisePredictor, SamplerKind,
};
pub use schedule::{LinearSchedule, NoiseSchedule};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("timestep {t} outside schedule of length {len}")]
    Timestep { t: usize, len: usize },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("invalid guidance config: {0}")]
    Config(String),
    #[error("guidance weight {0} > 0 requires a classifier")]
    MissingClassifier(f64),
    #[error(transparent)]
    Tensor(#[from] unic_tensor::TensorError),
}

pub type Result<T> = std::result::Result<T, DiffusionError>;
