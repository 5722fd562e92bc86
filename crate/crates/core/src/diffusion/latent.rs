use unic_tensor::Tensor;

/// Pixels in `[0, 1]` map affinely onto latents in `[-1, 1]`, so a mostly
/// black frame is not already buried under unit-variance noise at small t.
pub fn pixels_to_latent(x: &Tensor) -> Tensor {
    x.map(|v| 2.0 * v - 1.0)
}

/// Inverse of [`pixels_to_latent`], clamped to the pixel range.
pub fn latent_to_pixels(z: &Tensor) -> Tensor {
    z.map(|v| (0.5 * (v + 1.0)).clamp(0.0, 1.0))
}

pub const LATENT_MIN: f64 = -1.0;
pub const LATENT_MAX: f64 = 1.0;
