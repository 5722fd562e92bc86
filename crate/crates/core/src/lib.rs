//! Classifier-guided diffusion on a synthetic image-to-video stack.
//!
//! The crate trains a small conditional denoiser on rendered toy scenes,
//! labels images by what a toy image-to-video model does with them, trains a
//! binary classifier on the frozen denoiser encoder, and uses its input
//! gradient to steer sampling toward images that animate well.

pub mod diffusion;
pub mod eval;
pub mod labeling;
pub mod models;
pub mod par;
pub mod rng;
pub mod toy_world;
