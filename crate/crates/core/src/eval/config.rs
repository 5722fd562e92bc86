use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::diffusion::{LinearSchedule, SamplerKind};
use crate::labeling::LabelConfig;
use crate::models::{DenoiserConfig, TrainConfig};
use crate::rng::Rng;
use crate::toy_world::{CorpusConfig, Variant};

/// Everything a run depends on. Seeds of individual stages are derived from
/// `master_seed`; the `seed` fields inside the training presets are
/// overwritten with those derived seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub corpus: CorpusConfig,
    pub labeling: LabelConfig,
    pub schedule: LinearSchedule,
    pub denoiser: DenoiserConfig,
    pub denoiser_train: TrainConfig,
    pub classifier_train: TrainConfig,
    /// Dynamics variant whose videos produce the video-prior labels.
    pub train_variant: Variant,
    /// Dynamics variant used to animate generated samples.
    pub eval_variant: Variant,
    pub lambdas: Vec<f64>,
    pub samples: usize,
    pub sampler: SamplerKind,
    pub sampler_steps: usize,
    #[serde(default)]
    pub eta: f64,
    /// Samples per sampling task; fixed so results do not depend on
    /// `workers`.
    pub sample_chunk: usize,
    /// Mean flow magnitude (px/frame) above which a video counts as dynamic.
    pub motion_threshold: f64,
    /// Accuracy probes use timesteps below this bound (the default covers
    /// t <= T/4).
    pub accuracy_t_max: usize,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    /// Overrides the sampling seed otherwise derived from `master_seed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_seed: Option<u64>,
    /// Keep every labelled video as a tensor next to its label manifest
    /// (otherwise videos are regenerated from their recorded seeds).
    #[serde(default)]
    pub store_videos: bool,
    /// Worker threads; 0 uses every core. Never affects results.
    #[serde(default)]
    pub workers: usize,
}

impl ExperimentConfig {
    /// Desk-scale defaults: about two thousand scenes, 256 samples per
    /// condition, a five-point guidance sweep.
    pub fn desk() -> Self {
        let schedule = LinearSchedule::default();
        Self {
            corpus: CorpusConfig::default(),
            labeling: LabelConfig::default(),
            schedule,
            denoiser: DenoiserConfig::default(),
            denoiser_train: TrainConfig::denoiser_default(),
            classifier_train: TrainConfig::classifier_default(),
            train_variant: Variant::A,
            eval_variant: Variant::A,
            lambdas: vec![0.0, 1.0, 2.0, 4.0, 8.0],
            samples: 256,
            sampler: SamplerKind::Ddim,
            sampler_steps: 20,
            eta: 0.0,
            sample_chunk: 16,
            motion_threshold: 0.25,
            accuracy_t_max: schedule.steps / 4 + 1,
            output_dir: PathBuf::from("runs/desk"),
            master_seed: 20240501,
            sample_seed: None,
            store_videos: false,
            workers: 0,
        }
    }

    /// A few seconds end to end; exercises every stage at toy sizes.
    pub fn smoke() -> Self {
        let mut c = Self::desk();
        c.corpus.n_prompts = 24;
        c.corpus.images_per_prompt = 4;
        c.denoiser_train.steps = 20;
        c.denoiser_train.batch = 8;
        c.denoiser_train.eval_every = 10;
        c.denoiser_train.held_out_max = 16;
        c.classifier_train.steps = 20;
        c.classifier_train.batch = 16;
        c.classifier_train.eval_every = 10;
        c.classifier_train.held_out_max = 16;
        c.lambdas = vec![0.0, 2.0];
        c.samples = 16;
        c.sampler_steps = 4;
        c.sample_chunk = 4;
        c.output_dir = PathBuf::from("runs/smoke");
        c
    }

    /// Reference-scale corpus and classifier recipe.
    pub fn paper() -> Self {
        let mut c = Self::desk();
        c.corpus = CorpusConfig::paper();
        c.classifier_train = TrainConfig::paper_classifier();
        c.denoiser_train.steps = 20_000;
        c.lambdas = vec![0.0, 1.0, 2.0, 8.0];
        c.output_dir = PathBuf::from("runs/paper");
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "smoke" => Ok(Self::smoke()),
            "paper" => Ok(Self::paper()),
            other => Err(EvalError::Config(format!(
                "unknown preset {other:?} (expected desk, smoke or paper)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EvalError::Config(m));
        if self.lambdas.is_empty() {
            return bad("lambdas must not be empty".into());
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return bad(format!("lambda {l} is not a non-negative number"));
        }
        if !self.lambdas.contains(&0.0) {
            return bad("lambdas must include 0 (the unguided baseline)".into());
        }
        let mut sorted = self.lambdas.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        if sorted.len() != self.lambdas.len() {
            return bad("lambdas must be distinct".into());
        }
        if self.samples < 16 {
            return bad(format!("samples = {} (at least 16 required)", self.samples));
        }
        if self.sampler_steps == 0 || self.sampler_steps > self.schedule.steps {
            return bad(format!("sampler_steps = {}", self.sampler_steps));
        }
        if self.sample_chunk == 0 {
            return bad("sample_chunk must be positive".into());
        }
        if !(self.motion_threshold >= 0.0) {
            return bad("motion_threshold must be non-negative".into());
        }
        if self.accuracy_t_max == 0 || self.accuracy_t_max > self.schedule.steps {
            return bad(format!("accuracy_t_max = {}", self.accuracy_t_max));
        }
        self.corpus.validate().map_err(EvalError::Config)?;
        self.denoiser_train
            .validate()
            .map_err(|e| EvalError::Config(format!("denoiser_train: {e}")))?;
        self.classifier_train
            .validate()
            .map_err(|e| EvalError::Config(format!("classifier_train: {e}")))?;
        self.schedule
            .build()
            .map_err(|e| EvalError::Config(format!("schedule: {e}")))?;
        Ok(())
    }

    /// Lambdas in ascending order.
    pub fn sorted_lambdas(&self) -> Vec<f64> {
        let mut l = self.lambdas.clone();
        l.sort_by(f64::total_cmp);
        l
    }

    pub fn seed(&self, stage: &str) -> u64 {
        Rng::new(self.master_seed).derive(stage).key()
    }
}
