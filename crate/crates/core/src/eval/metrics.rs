use super::{EvalError, Result};
use crate::labeling::{optical_flow, FlowConfig, FlowStats};
use crate::par::Workers;
use crate::rng::Rng;
use crate::toy_world::{Dynamics, Frame, Variant, Video};

/// Fraction of `stats` whose mean flow magnitude exceeds `threshold`.
pub fn degree_from_stats(stats: &[FlowStats], threshold: f64) -> Result<f64> {
    if stats.is_empty() {
        return Err(EvalError::Config("dynamic degree of an empty set".into()));
    }
    let moving = stats.iter().filter(|s| s.mean_mag > threshold).count();
    Ok(moving as f64 / stats.len() as f64)
}

/// Fraction of videos whose mean optical-flow magnitude exceeds
/// `threshold` px/frame.
pub fn dynamic_degree(
    videos: &[Video],
    threshold: f64,
    flow: &FlowConfig,
    workers: &Workers,
) -> Result<f64> {
    let stats = workers.map(videos, |v| FlowStats::from_fields(&optical_flow(v, flow)));
    degree_from_stats(&stats, threshold)
}

/// Mean residual flow magnitude (per-frame spatial mean subtracted) of
/// `n_seeds` independent animations of `frame`, in seed order.
pub fn motion_statistics(
    frame: &Frame,
    n_seeds: usize,
    variant: Variant,
    dynamics: &Dynamics,
    frames: usize,
    flow: &FlowConfig,
    rng: &Rng,
    workers: &Workers,
) -> Result<Vec<f64>> {
    if n_seeds < 2 {
        return Err(EvalError::Config(format!("n_seeds = {n_seeds} (at least 2)")));
    }
    Ok(workers.map_range(n_seeds, |i| {
        let mut r = rng.derive_indexed("motion", i as u64);
        let video = dynamics.animate(frame, frames, variant, &mut r);
        let fields = optical_flow(&video, flow);
        let sum: f64 = fields.iter().map(|f| f.magnitude_and_residual().1).sum();
        sum / fields.len() as f64
    }))
}
