use serde::{Deserialize, Serialize};

use super::filter::{flow_filter, FilterDecision, FlowRule, FlowStats};
use super::flow::{optical_flow, FlowConfig};
use super::judge::{sample_frames, Criteria, Judge, JudgeConfig, RuleJudge};
use crate::par::Workers;
use crate::rng::Rng;
use crate::toy_world::{perceive, Dynamics, Frame, Variant, Video};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    FlowFilter,
    Criteria,
    Passed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMode {
    VideoPrior,
    ImagePrior,
}

impl std::str::FromStr for LabelMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "video-prior" => Ok(Self::VideoPrior),
            "image-prior" => Ok(Self::ImagePrior),
            other => Err(format!(
                "unknown mode {other:?} (expected video-prior or image-prior)"
            )),
        }
    }
}

/// Image-only checks used by the image-prior labeler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageChecks {
    pub visible: bool,
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub index: usize,
    pub mode: LabelMode,
    /// Seed from which the video was generated (video mode only); the video
    /// is reproducible from the image, the variant, and this seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub video_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow_stats: Option<FlowStats>,
    /// Absent when the flow filter already decided.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criteria: Option<Criteria>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_checks: Option<ImageChecks>,
    pub label: bool,
    pub stage: Stage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelConfig {
    pub video_frames: usize,
    pub judge_frames: usize,
    pub rule: FlowRule,
    pub flow: FlowConfig,
    pub judge: JudgeConfig,
    pub dynamics: Dynamics,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            video_frames: 8,
            judge_frames: 4,
            rule: FlowRule::default(),
            flow: FlowConfig::default(),
            judge: JudgeConfig::default(),
            dynamics: Dynamics::default(),
        }
    }
}

impl LabelConfig {
    pub fn video_for(&self, frame: &Frame, variant: Variant, seed: u64) -> Video {
        self.dynamics
            .animate(frame, self.video_frames, variant, &mut Rng::new(seed))
    }
}

/// Labels one image through the video prior: animate, filter on flow
/// statistics, then judge sampled frames.
pub fn label_one(
    index: usize,
    frame: &Frame,
    variant: Variant,
    seed: u64,
    cfg: &LabelConfig,
    judge: &dyn Judge,
) -> LabeledPair {
    let video = cfg.video_for(frame, variant, seed);
    let stats = FlowStats::from_fields(&optical_flow(&video, &cfg.flow));
    let mut pair = LabeledPair {
        index,
        mode: LabelMode::VideoPrior,
        video_seed: Some(seed),
        flow_stats: Some(stats),
        criteria: None,
        image_checks: None,
        label: false,
        stage: Stage::FlowFilter,
    };
    if flow_filter(&stats, &cfg.rule) == FilterDecision::Negative {
        return pair;
    }
    let sampled = sample_frames(&video, cfg.judge_frames).expect("judge frames fit the video");
    let c = judge.judge(&sampled);
    pair.criteria = Some(c);
    pair.label = c.all();
    pair.stage = if pair.label {
        Stage::Passed
    } else {
        Stage::Criteria
    };
    pair
}

/// Video-prior labels for every frame, each animated from its own stream
/// derived from `rng` and its index.
pub fn label_corpus(
    frames: &[Frame],
    variant: Variant,
    cfg: &LabelConfig,
    rng: &Rng,
    workers: &Workers,
) -> Vec<LabeledPair> {
    let judge = RuleJudge {
        config: cfg.judge.clone(),
        flow: cfg.flow.clone(),
    };
    label_corpus_with(frames, variant, cfg, &judge, rng, workers)
}

pub fn label_corpus_with(
    frames: &[Frame],
    variant: Variant,
    cfg: &LabelConfig,
    judge: &dyn Judge,
    rng: &Rng,
    workers: &Workers,
) -> Vec<LabeledPair> {
    workers.map_range(frames.len(), |i| {
        let seed = rng.derive_indexed("video", i as u64).key();
        label_one(i, &frames[i], variant, seed, cfg, judge)
    })
}

/// Labels from the image alone: positive iff an object is visible at the
/// minimum area and looks complete.
pub fn label_image_priors(frames: &[Frame], cfg: &LabelConfig) -> Vec<LabeledPair> {
    frames
        .iter()
        .enumerate()
        .map(|(index, f)| {
            let checks = match perceive(f) {
                None => ImageChecks {
                    visible: false,
                    complete: false,
                },
                Some(p) => ImageChecks {
                    visible: p.area_fraction() >= cfg.judge.min_area_fraction,
                    complete: p.completeness >= cfg.dynamics.complete_threshold,
                },
            };
            let label = checks.visible && checks.complete;
            LabeledPair {
                index,
                mode: LabelMode::ImagePrior,
                video_seed: None,
                flow_stats: None,
                criteria: None,
                image_checks: Some(checks),
                label,
                stage: if label { Stage::Passed } else { Stage::Criteria },
            }
        })
        .collect()
}
