//! Turning images into labels: prompt de-duplication, optical flow, the
//! flow-statistics filter, a rule-based judge, and the two labelers.

mod dedup;
mod filter;
mod flow;
mod judge;
mod pipeline;

pub use dedup::{cosine, dedup_prompts, is_novel, DedupError};
pub use filter::{flow_filter, FilterDecision, FlowRule, FlowStats};
pub use flow::{flow_between, optical_flow, FlowConfig, FlowField};
pub use judge::{
    judge_criteria, sample_frames, sample_indices, Criteria, Judge, JudgeConfig, RuleJudge,
};
pub use pipeline::{
    label_corpus, label_corpus_with, label_image_priors, label_one, ImageChecks, LabelConfig, LabelMode, LabeledPair, Stage,
};
