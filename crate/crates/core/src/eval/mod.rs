//! Experiment driver: stage-cached runs, dynamic-degree evaluation, guidance
//! sweeps, transfer across dynamics variants and report emission.

mod config;
mod metrics;
mod pipeline;
mod report;

use std::path::Path;

pub use config::ExperimentConfig;
pub use metrics::{degree_from_stats, dynamic_degree, motion_statistics};
pub use pipeline::{
    classifier_data, denoiser_data, load_corpus, run_pipeline, save_corpus, transfer_study,
    ClassifierMetrics, Evaluation, LabelSource, Manifest, Pipeline, StageRecord, IMAGE_PRIORS,
    UNI_C,
};
pub use report::{emit_report, load_report, Report, ReportRow};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },
}

impl EvalError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// The failing stage, if the error came from one.
    pub fn stage(&self) -> Option<&str> {
        match self {
            Self::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, EvalError>;
