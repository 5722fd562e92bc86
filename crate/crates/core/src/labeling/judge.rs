use serde::{Deserialize, Serialize};

use super::flow::{optical_flow, FlowConfig};
use crate::toy_world::{perceive, Frame, Video};

/// `k` frames at regular intervals, first and last included:
/// indices `round(i·(L−1)/(k−1))`.
pub fn sample_frames(video: &Video, k: usize) -> Result<Vec<Frame>, String> {
    Ok(sample_indices(video.len(), k)?
        .into_iter()
        .map(|i| video.frames()[i].clone())
        .collect())
}

pub fn sample_indices(len: usize, k: usize) -> Result<Vec<usize>, String> {
    if k < 2 {
        return Err(format!("need at least two sampled frames, got {k}"));
    }
    if k > len {
        return Err(format!("cannot sample {k} frames from {len}"));
    }
    Ok((0..k)
        .map(|i| ((i * (len - 1)) as f64 / (k - 1) as f64).round() as usize)
        .collect())
}

/// Verdicts of the five judging rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Criteria {
    /// The object covers at least the minimum area in every frame.
    pub visibility: bool,
    /// Its shape elongation stays near the first frame's.
    pub no_distortion: bool,
    /// Its area stays roughly constant.
    pub consistency: bool,
    /// Its centroid travels far enough.
    pub motion: bool,
    /// The motion is not a global shift of the whole frame.
    pub not_camera_only: bool,
}

impl Criteria {
    pub fn all(&self) -> bool {
        self.visibility && self.no_distortion && self.consistency && self.motion && self.not_camera_only
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub min_area_fraction: f64,
    pub max_elongation_change: f64,
    pub max_area_change: f64,
    pub min_path_px: f64,
    pub min_residual_ratio: f64,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            min_area_fraction: 0.10,
            max_elongation_change: 0.25,
            max_area_change: 0.30,
            min_path_px: 1.0,
            min_residual_ratio: 0.25,
        }
    }
}

/// Something that scores sampled frames against the five criteria.
pub trait Judge: Sync {
    fn judge(&self, frames: &[Frame]) -> Criteria;
}

/// Deterministic geometric judge.
#[derive(Clone, Debug, Default)]
pub struct RuleJudge {
    pub config: JudgeConfig,
    pub flow: FlowConfig,
}

impl Judge for RuleJudge {
    fn judge(&self, frames: &[Frame]) -> Criteria {
        judge_criteria(frames, &self.config, &self.flow)
    }
}

pub fn judge_criteria(frames: &[Frame], cfg: &JudgeConfig, flow: &FlowConfig) -> Criteria {
    assert!(frames.len() >= 2, "judging needs at least two frames");
    let seen: Vec<_> = frames.iter().map(perceive).collect();

    let residual_ok = {
        let fields = optical_flow(&Video::new(frames.to_vec()), flow);
        let (mut mag, mut res) = (0.0, 0.0);
        for f in &fields {
            let (m, r) = f.magnitude_and_residual();
            mag += m;
            res += r;
        }
        res >= cfg.min_residual_ratio * mag
    };

    let Some(objs) = seen.into_iter().collect::<Option<Vec<_>>>() else {
        return Criteria {
            visibility: false,
            no_distortion: false,
            consistency: false,
            motion: false,
            not_camera_only: residual_ok,
        };
    };
    let visibility = objs.iter().all(|p| p.area_fraction() >= cfg.min_area_fraction);
    let e0 = objs[0].elongation;
    let no_distortion = objs
        .iter()
        .all(|p| (p.elongation - e0).abs() <= cfg.max_elongation_change * e0);
    let (amin, amax) = objs.iter().fold((usize::MAX, 0), |(lo, hi), p| {
        (lo.min(p.area_px), hi.max(p.area_px))
    });
    let consistency = ((amax - amin) as f64) < cfg.max_area_change * amax as f64;
    let s = crate::toy_world::FRAME_SIZE as f64;
    let path: f64 = objs
        .windows(2)
        .map(|w| ((w[1].cx - w[0].cx) * s).hypot((w[1].cy - w[0].cy) * s))
        .sum();
    Criteria {
        visibility,
        no_distortion,
        consistency,
        motion: path >= cfg.min_path_px,
        not_camera_only: residual_ok,
    }
}
