use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unic_tensor::{serialize, Tensor};

use super::config::ExperimentConfig;
use super::metrics::degree_from_stats;
use super::report::{Report, ReportRow};
use super::{EvalError, Result};
use crate::diffusion::{pixels_to_latent, sample_batch, GuidanceConfig, GuidanceScore, NoiseSchedule};
use crate::labeling::{label_corpus, label_image_priors, LabelMode, LabeledPair};
use crate::models::{
    classifier_accuracy, load_classifier, load_denoiser, save_classifier, save_denoiser,
    train_classifier, train_denoiser, write_loss_csv, ClassifierData, Denoiser, DenoiserData,
    UniClassifier, COND_DIM,
};
use crate::par::Workers;
use crate::rng::Rng;
use crate::toy_world::{
    generate_corpus, Corpus, CorpusRecord, FailureKind, Frame, Prompt, SceneSpec, Variant,
};

/// Name of the classifier trained on video-prior labels.
pub const UNI_C: &str = "uni_c";
/// Name of the classifier trained on image-prior labels.
pub const IMAGE_PRIORS: &str = "image_priors";

/// Which labels a classifier is trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSource {
    pub mode: LabelMode,
    /// Dynamics variant of the videos (video-prior labels only).
    pub variant: Option<Variant>,
}

impl LabelSource {
    pub fn video(variant: Variant) -> Self {
        Self {
            mode: LabelMode::VideoPrior,
            variant: Some(variant),
        }
    }

    pub fn image() -> Self {
        Self {
            mode: LabelMode::ImagePrior,
            variant: None,
        }
    }

    pub fn condition(&self) -> &'static str {
        match self.mode {
            LabelMode::VideoPrior => UNI_C,
            LabelMode::ImagePrior => IMAGE_PRIORS,
        }
    }

    fn tag(&self) -> String {
        match self.variant {
            Some(v) => format!("{}-{}", self.condition(), v),
            None => self.condition().to_string(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RecordLine {
    index: usize,
    /// `<file>#<row>`: the frame is row `index` of the frames tensor.
    image: String,
    prompt_id: usize,
    embedding: Vec<f64>,
    image_index: usize,
    scene: SceneSpec,
    failure: Option<FailureKind>,
}

/// One line of a label manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct LabelLine {
    image: String,
    /// Row of the stored videos tensor, when videos were kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    video: Option<String>,
    #[serde(flatten)]
    pair: LabeledPair,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SampleLine {
    index: usize,
    prompt_id: usize,
    lambda: f64,
    guide: Option<LabelSource>,
    /// Key of the sample's own noise stream.
    seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub key: String,
    pub dir: String,
    /// Whether the last invocation reused a completed stage.
    pub reused: bool,
}

/// Held-out quality of a trained classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub held_out: Vec<usize>,
    /// Accuracy on the held-out indices at timesteps below `t_max`.
    pub accuracy: f64,
    pub t_max: usize,
    pub positives: usize,
    pub total: usize,
}

/// Per-sample evaluation of one batch of generated images.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub labels: Vec<LabeledPair>,
    pub dynamic_degree: f64,
    pub positive_rate: f64,
}

fn content_key(name: &str, inputs: &serde_json::Value) -> String {
    let mut h = Sha256::new();
    h.update(name.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(inputs).expect("json value serializes"));
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut f, it)?;
        f.write_all(b"\n")?;
    }
    f.flush()
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> std::result::Result<Vec<T>, String> {
    let f = fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    std::io::BufReader::new(f)
        .lines()
        .enumerate()
        .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|(n, l)| {
            let l = l.map_err(|e| format!("{}: {e}", path.display()))?;
            serde_json::from_str(&l).map_err(|e| format!("{}:{}: {e}", path.display(), n + 1))
        })
        .collect()
}

fn frames_tensor(frames: &[Frame]) -> std::result::Result<Tensor, String> {
    Tensor::stack_outer(&frames.iter().map(Frame::to_tensor).collect::<Vec<_>>())
        .map_err(|e| e.to_string())
}

fn split_frames(t: &Tensor) -> Vec<Frame> {
    (0..t.shape()[0]).map(|i| Frame::from_tensor(&t.index_outer(i))).collect()
}

pub fn save_corpus(dir: &Path, corpus: &Corpus) -> std::result::Result<(), String> {
    let io = |e: std::io::Error| format!("{}: {e}", dir.display());
    fs::create_dir_all(dir).map_err(io)?;
    write_jsonl(&dir.join("prompts.jsonl"), &corpus.prompts).map_err(io)?;
    let lines: Vec<RecordLine> = corpus
        .records
        .iter()
        .enumerate()
        .map(|(index, r)| RecordLine {
            index,
            image: format!("frames.tensor#{index}"),
            prompt_id: r.prompt_id,
            embedding: corpus.embedding(r).to_vec(),
            image_index: r.image_index,
            scene: r.scene,
            failure: r.failure,
        })
        .collect();
    write_jsonl(&dir.join("manifest.jsonl"), &lines).map_err(io)?;
    let frames: Vec<Frame> = corpus.records.iter().map(|r| r.frame.clone()).collect();
    serialize::save(&dir.join("frames.tensor"), &frames_tensor(&frames)?).map_err(|e| e.to_string())
}

pub fn load_corpus(dir: &Path) -> std::result::Result<Corpus, String> {
    let prompts: Vec<Prompt> = read_jsonl(&dir.join("prompts.jsonl"))?;
    let lines: Vec<RecordLine> = read_jsonl(&dir.join("manifest.jsonl"))?;
    let frames = split_frames(&serialize::load(&dir.join("frames.tensor")).map_err(|e| e.to_string())?);
    if frames.len() != lines.len() {
        return Err(format!(
            "{}: {} frames for {} records",
            dir.display(),
            frames.len(),
            lines.len()
        ));
    }
    let records = lines
        .into_iter()
        .zip(frames)
        .map(|(l, frame)| CorpusRecord {
            prompt_id: l.prompt_id,
            image_index: l.image_index,
            scene: l.scene,
            failure: l.failure,
            frame,
        })
        .collect();
    Ok(Corpus { prompts, records })
}

/// Stage runner over a run directory. Each stage lives in
/// `stages/<name>-<key>/`, where the key hashes the stage's inputs
/// (configuration slices and upstream keys). A stage is complete once its
/// `complete` marker exists; reruns load it instead of recomputing.
pub struct Pipeline {
    pub config: ExperimentConfig,
    workers: Workers,
    schedule: NoiseSchedule,
    stages: BTreeMap<String, StageRecord>,
    pub verbose: bool,
}

impl Pipeline {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let schedule = config
            .schedule
            .build()
            .map_err(|e| EvalError::Config(e.to_string()))?;
        let workers = if config.workers == 1 {
            Workers::sequential()
        } else {
            Workers::new(config.workers)
        };
        Ok(Self {
            config,
            workers,
            schedule,
            stages: BTreeMap::new(),
            verbose: false,
        })
    }

    pub fn root(&self) -> &Path {
        &self.config.output_dir
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    pub fn workers(&self) -> &Workers {
        &self.workers
    }

    pub fn stages(&self) -> &BTreeMap<String, StageRecord> {
        &self.stages
    }

    fn run_stage<T>(
        &mut self,
        name: &str,
        inputs: serde_json::Value,
        load: impl Fn(&Path) -> std::result::Result<T, String>,
        compute: impl FnOnce(&Path, &Self) -> std::result::Result<T, String>,
    ) -> Result<(T, String)> {
        let key = content_key(name, &inputs);
        let rel = PathBuf::from("stages").join(format!("{name}-{key}"));
        let dir = self.root().join(&rel);
        let marker = dir.join("complete");
        let fail = |message: String| EvalError::Stage {
            stage: name.to_string(),
            message,
        };
        let mut reused = false;
        let value = if marker.exists() {
            match load(&dir) {
                Ok(v) => {
                    reused = true;
                    Some(v)
                }
                Err(e) => {
                    self.log(&format!("{name}: cached artifacts unreadable ({e}); recomputing"));
                    None
                }
            }
        } else {
            None
        };
        let value = match value {
            Some(v) => v,
            None => {
                let _ = fs::remove_file(&marker);
                fs::create_dir_all(&dir).map_err(|e| fail(format!("{}: {e}", dir.display())))?;
                fs::write(
                    dir.join("inputs.json"),
                    serde_json::to_string_pretty(&inputs).expect("json value serializes"),
                )
                .map_err(|e| fail(format!("{}: {e}", dir.display())))?;
                self.log(&format!("{name}: running"));
                let v = compute(&dir, self).map_err(fail)?;
                fs::write(&marker, &key).map_err(|e| fail(format!("{}: {e}", marker.display())))?;
                v
            }
        };
        self.stages.insert(
            name.to_string(),
            StageRecord {
                key: key.clone(),
                dir: rel.to_string_lossy().into_owned(),
                reused,
            },
        );
        Ok((value, key))
    }

    /// Path, relative to the run root, of `file` inside the stage with `key`.
    fn artifact(&self, key: &str, file: &str) -> String {
        let dir = self
            .stages
            .values()
            .find(|r| r.key == key)
            .map(|r| r.dir.clone())
            .unwrap_or_default();
        format!("{dir}/{file}")
    }

    fn log(&self, msg: &str) {
        if self.verbose {
            eprintln!("[pipeline] {msg}");
        }
    }

    pub fn corpus(&mut self) -> Result<(Corpus, String)> {
        let inputs = serde_json::json!({
            "corpus": self.config.corpus,
            "seed": self.config.seed("corpus"),
        });
        self.run_stage("corpus", inputs, load_corpus, |dir, p| {
            let rng = Rng::new(p.config.seed("corpus"));
            let corpus = generate_corpus(&p.config.corpus, &rng, &p.workers);
            save_corpus(dir, &corpus)?;
            Ok(corpus)
        })
    }

    pub fn labels(&mut self, source: LabelSource) -> Result<(Vec<LabeledPair>, String)> {
        let (corpus, corpus_key) = self.corpus()?;
        let name = format!("labels-{}", source.tag());
        let inputs = serde_json::json!({
            "corpus": corpus_key,
            "source": source,
            "labeling": self.config.labeling,
            "seed": self.config.seed("labels"),
        });
        let image_dir = self.artifact(&corpus_key, "frames.tensor");
        self.run_stage(&name, inputs, read_labels, |dir, p| {
            let frames: Vec<Frame> = corpus.records.iter().map(|r| r.frame.clone()).collect();
            let labels = match source.variant {
                Some(v) if source.mode == LabelMode::VideoPrior => label_corpus(
                    &frames,
                    v,
                    &p.config.labeling,
                    &Rng::new(p.config.seed("labels")),
                    &p.workers,
                ),
                _ => label_image_priors(&frames, &p.config.labeling),
            };
            p.write_labels(dir, &image_dir, &frames, source.variant, &labels)?;
            Ok(labels)
        })
    }

    pub fn denoiser(&mut self) -> Result<(Denoiser, String)> {
        let (corpus, corpus_key) = self.corpus()?;
        let mut train = self.config.denoiser_train.clone();
        train.seed = self.config.seed("denoiser");
        let inputs = serde_json::json!({
            "corpus": corpus_key,
            "schedule": self.config.schedule,
            "model": self.config.denoiser,
            "train": train,
        });
        self.run_stage(
            "denoiser",
            inputs,
            |dir| load_denoiser(&dir.join("checkpoint")).map_err(|e| e.to_string()),
            |dir, p| {
                let data = denoiser_data(&corpus)?;
                let trained = train_denoiser(&data, &p.schedule, &train, &p.config.denoiser, &p.workers)
                    .map_err(|e| e.to_string())?;
                write_loss_csv(&dir.join("loss.csv"), &trained.curve).map_err(|e| e.to_string())?;
                save_denoiser(&dir.join("checkpoint"), &trained.model, Some(&train), Some(&data.hash()))
                    .map_err(|e| e.to_string())?;
                Ok(trained.model)
            },
        )
    }

    pub fn classifier(
        &mut self,
        source: LabelSource,
    ) -> Result<((UniClassifier, ClassifierMetrics), String)> {
        let (corpus, _) = self.corpus()?;
        let (labels, labels_key) = self.labels(source)?;
        let (denoiser, denoiser_key) = self.denoiser()?;
        let mut train = self.config.classifier_train.clone();
        train.seed = self.config.seed("classifier");
        let t_max = self.config.accuracy_t_max;
        let name = format!("classifier-{}", source.tag());
        let inputs = serde_json::json!({
            "labels": labels_key,
            "denoiser": denoiser_key,
            "train": train,
            "accuracy_t_max": t_max,
        });
        self.run_stage(
            &name,
            inputs,
            |dir| {
                let clf = load_classifier(&dir.join("checkpoint")).map_err(|e| e.to_string())?;
                let m = fs::read_to_string(dir.join("metrics.json")).map_err(|e| e.to_string())?;
                Ok((clf, serde_json::from_str(&m).map_err(|e| e.to_string())?))
            },
            |dir, p| {
                let data = classifier_data(&corpus, &labels)?;
                let trained = train_classifier(&data, &denoiser, &p.schedule, &train, &p.workers)
                    .map_err(|e| e.to_string())?;
                write_loss_csv(&dir.join("loss.csv"), &trained.curve).map_err(|e| e.to_string())?;
                save_classifier(&dir.join("checkpoint"), &trained.model, Some(&train), Some(&data.hash()))
                    .map_err(|e| e.to_string())?;
                let accuracy = classifier_accuracy(
                    &trained.model,
                    &data,
                    &trained.held_out,
                    &p.schedule,
                    t_max,
                    train.seed,
                    &p.workers,
                )
                .map_err(|e| e.to_string())?;
                let metrics = ClassifierMetrics {
                    held_out: trained.held_out,
                    accuracy,
                    t_max,
                    positives: data.labels.iter().filter(|&&l| l).count(),
                    total: data.labels.len(),
                };
                fs::write(
                    dir.join("metrics.json"),
                    serde_json::to_string_pretty(&metrics).expect("metrics serialize"),
                )
                .map_err(|e| e.to_string())?;
                Ok((trained.model, metrics))
            },
        )
    }

    fn guidance(&self, lambda: f64) -> GuidanceConfig {
        GuidanceConfig {
            lambda,
            sampler: self.config.sampler,
            steps: self.config.sampler_steps,
            eta: self.config.eta,
            seed: self
                .config
                .sample_seed
                .unwrap_or_else(|| self.config.seed("sample")),
            ..GuidanceConfig::default()
        }
    }

    /// Prompt used to condition sample `i`: the corpus prompts in order,
    /// cycled.
    fn sample_prompt(corpus: &Corpus, i: usize) -> &Prompt {
        &corpus.prompts[i % corpus.prompts.len()]
    }

    /// `config.samples` images drawn with guidance weight `lambda` from the
    /// classifier trained on `guide` (ignored at `lambda == 0`, so every
    /// condition shares one unguided batch).
    pub fn samples(&mut self, guide: Option<LabelSource>, lambda: f64) -> Result<(Tensor, String)> {
        let guide = if lambda > 0.0 {
            Some(guide.ok_or_else(|| {
                EvalError::Config(format!("lambda = {lambda} needs a guiding classifier"))
            })?)
        } else {
            None
        };
        let (corpus, corpus_key) = self.corpus()?;
        let (denoiser, denoiser_key) = self.denoiser()?;
        let (clf, clf_key) = match guide {
            Some(g) => {
                let ((c, _), k) = self.classifier(g)?;
                (Some(c), Some(k))
            }
            None => (None, None),
        };
        let guidance = self.guidance(lambda);
        let name = match guide {
            Some(g) => format!("samples-{}-l{lambda}", g.tag()),
            None => "samples-baseline".to_string(),
        };
        let inputs = serde_json::json!({
            "corpus": corpus_key,
            "denoiser": denoiser_key,
            "classifier": clf_key,
            "guidance": guidance,
            "samples": self.config.samples,
            "chunk": self.config.sample_chunk,
        });
        self.run_stage(
            &name,
            inputs,
            |dir| serialize::load(&dir.join("samples.tensor")).map_err(|e| e.to_string()),
            |dir, p| {
                let n = p.config.samples;
                let cond = Tensor::new(
                    vec![n, COND_DIM],
                    (0..n)
                        .flat_map(|i| Self::sample_prompt(&corpus, i).embedding.clone())
                        .collect(),
                )
                .map_err(|e| e.to_string())?;
                let s = p.config.denoiser.image_size;
                let out = sample_batch(
                    &denoiser,
                    clf.as_ref().map(|c| c as &dyn GuidanceScore),
                    &cond,
                    &[1, s, s],
                    &guidance,
                    &p.schedule,
                    p.config.sample_chunk,
                    &p.workers,
                )
                .map_err(|e| e.to_string())?;
                serialize::save(&dir.join("samples.tensor"), &out).map_err(|e| e.to_string())?;
                fs::write(
                    dir.join("sampler.json"),
                    serde_json::to_string_pretty(&serde_json::json!({
                        "lambda": guidance.lambda,
                        "sampler": guidance.sampler,
                        "steps": guidance.steps,
                        "eta": guidance.eta,
                        "seed": guidance.seed,
                        "count": n,
                    }))
                    .expect("json value serializes"),
                )
                .map_err(|e| e.to_string())?;
                let root = Rng::new(guidance.seed);
                let lines: Vec<SampleLine> = (0..n)
                    .map(|i| SampleLine {
                        index: i,
                        prompt_id: Self::sample_prompt(&corpus, i).id,
                        lambda,
                        guide,
                        seed: root.derive_indexed("sample", i as u64).key(),
                    })
                    .collect();
                write_jsonl(&dir.join("manifest.jsonl"), &lines).map_err(|e| e.to_string())?;
                Ok(out)
            },
        )
    }

    /// Animates each sample with `variant` and labels it with the video
    /// prior. Video seeds depend only on the sample index, so conditions are
    /// compared on common random numbers.
    pub fn evaluate(
        &mut self,
        samples: &Tensor,
        samples_key: &str,
        variant: Variant,
    ) -> Result<Evaluation> {
        let inputs = serde_json::json!({
            "samples": samples_key,
            "variant": variant,
            "labeling": self.config.labeling,
            "seed": self.config.seed("eval-videos"),
        });
        let name = format!("eval-{variant}-{samples_key}");
        let image_dir = self.artifact(samples_key, "samples.tensor");
        let (labels, _) = self.run_stage(&name, inputs, read_labels, |dir, p| {
            let frames = split_frames(samples);
            let labels = label_corpus(
                &frames,
                variant,
                &p.config.labeling,
                &Rng::new(p.config.seed("eval-videos")),
                &p.workers,
            );
            p.write_labels(dir, &image_dir, &frames, Some(variant), &labels)?;
            Ok(labels)
        })?;
        let stats: Vec<_> = labels
            .iter()
            .map(|l| l.flow_stats.unwrap_or_default())
            .collect();
        let dynamic_degree = degree_from_stats(&stats, self.config.motion_threshold)?;
        let positive_rate = labels.iter().filter(|l| l.label).count() as f64 / labels.len() as f64;
        Ok(Evaluation {
            labels,
            dynamic_degree,
            positive_rate,
        })
    }

    /// Writes `labels.jsonl` and, when `store_videos` is set, the labelled
    /// videos as one `[N, L, S, S]` tensor.
    fn write_labels(
        &self,
        dir: &Path,
        images: &str,
        frames: &[Frame],
        variant: Option<Variant>,
        labels: &[LabeledPair],
    ) -> std::result::Result<(), String> {
        let keep = self.config.store_videos && variant.is_some();
        if keep {
            let v = variant.expect("checked");
            let videos: Vec<Tensor> = self.workers.map_range(labels.len(), |i| {
                let seed = labels[i].video_seed.expect("video-prior labels carry seeds");
                let t = self.config.labeling.video_for(&frames[i], v, seed).to_tensor();
                let mut shape = vec![1];
                shape.extend_from_slice(t.shape());
                t.reshape(&shape).expect("same element count")
            });
            let all = Tensor::stack_outer(&videos).map_err(|e| e.to_string())?;
            serialize::save(&dir.join("videos.tensor"), &all).map_err(|e| e.to_string())?;
        }
        let lines: Vec<LabelLine> = labels
            .iter()
            .map(|l| LabelLine {
                image: format!("{images}#{}", l.index),
                video: keep.then(|| format!("videos.tensor#{}", l.index)),
                pair: l.clone(),
            })
            .collect();
        write_jsonl(&dir.join("labels.jsonl"), &lines).map_err(|e| e.to_string())
    }

    /// Mean and standard error of `clf`'s logits on clean samples.
    pub fn logit_summary(&self, clf: &UniClassifier, samples: &Tensor) -> Result<(f64, f64)> {
        let n = samples.shape()[0];
        let chunk = self.config.sample_chunk;
        let parts = self
            .workers
            .try_map_range(n.div_ceil(chunk), |c| {
                let rows: Vec<Tensor> = (c * chunk..((c + 1) * chunk).min(n))
                    .map(|i| samples.index_outer(i))
                    .collect();
                let z = pixels_to_latent(&Tensor::stack_outer(&rows)?);
                clf.logits(&z, &vec![0; rows.len()])
            })
            .map_err(|e| EvalError::Stage {
                stage: "score".into(),
                message: e.to_string(),
            })?;
        let logits: Vec<f64> = parts.into_iter().flatten().collect();
        let k = logits.len() as f64;
        let mean = logits.iter().sum::<f64>() / k;
        let var = logits.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
        Ok((mean, (var / k).sqrt()))
    }

    /// One report row per lambda for samples guided by `guide` and animated
    /// with `eval`. Logits come from `scorer`.
    fn sweep_rows(
        &mut self,
        condition: &str,
        guide: LabelSource,
        scorer: &UniClassifier,
        eval: Variant,
    ) -> Result<Vec<ReportRow>> {
        let mut rows = Vec::new();
        for lambda in self.config.sorted_lambdas() {
            let (samples, key) = self.samples(Some(guide), lambda)?;
            let ev = self.evaluate(&samples, &key, eval)?;
            let (mean_logit, logit_se) = self.logit_summary(scorer, &samples)?;
            rows.push(ReportRow {
                condition: condition.to_string(),
                lambda,
                train_variant: guide.variant,
                eval_variant: eval,
                dynamic_degree: ev.dynamic_degree,
                mean_logit,
                logit_se,
                positive_rate: ev.positive_rate,
                samples: samples.shape()[0],
            });
        }
        Ok(rows)
    }

    /// Baseline, image-priors and Uni-C conditions over the lambda sweep.
    /// Every row's logit column is scored by the Uni-C classifier, so the
    /// shared lambda = 0 rows are identical across conditions.
    pub fn main_report(&mut self) -> Result<Report> {
        let uni = LabelSource::video(self.config.train_variant);
        let ((scorer, _), _) = self.classifier(uni)?;
        let eval = self.config.eval_variant;
        let mut rows = self.sweep_rows(IMAGE_PRIORS, LabelSource::image(), &scorer, eval)?;
        rows.extend(self.sweep_rows(UNI_C, uni, &scorer, eval)?);
        Ok(Report {
            title: "Dynamic degree of guided samples".into(),
            motion_threshold: self.config.motion_threshold,
            rows,
        })
    }

    /// Uni-C classifiers trained on each variant's labels, evaluated under
    /// each variant. Logits come from the guiding classifier.
    pub fn transfer_report(&mut self) -> Result<Report> {
        let mut rows = Vec::new();
        for train in [Variant::A, Variant::B] {
            let source = LabelSource::video(train);
            let ((scorer, _), _) = self.classifier(source)?;
            for eval in [Variant::A, Variant::B] {
                rows.extend(self.sweep_rows(UNI_C, source, &scorer, eval)?);
            }
        }
        Ok(Report {
            title: "Transfer across dynamics variants".into(),
            motion_threshold: self.config.motion_threshold,
            rows,
        })
    }

    /// Writes (or merges into) `manifest.json` at the run root.
    pub fn write_manifest(&self) -> Result<PathBuf> {
        let path = self.root().join("manifest.json");
        let mut stages: BTreeMap<String, StageRecord> = fs::read_to_string(&path)
            .ok()
            .and_then(|s| serde_json::from_str::<Manifest>(&s).ok())
            .map(|m| m.stages)
            .unwrap_or_default();
        stages.extend(self.stages.clone());
        let seeds = [
            "corpus",
            "labels",
            "denoiser",
            "classifier",
            "sample",
            "eval-videos",
        ]
        .iter()
        .map(|s| (s.to_string(), self.config.seed(s)))
        .collect();
        let m = Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed: self.config.master_seed,
            seeds,
            config: self.config.clone(),
            stages,
        };
        fs::create_dir_all(self.root()).map_err(|e| EvalError::io(self.root(), e))?;
        fs::write(&path, serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n")
            .map_err(|e| EvalError::io(&path, e))?;
        Ok(path)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub master_seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub config: ExperimentConfig,
    pub stages: BTreeMap<String, StageRecord>,
}

fn read_labels(dir: &Path) -> std::result::Result<Vec<LabeledPair>, String> {
    let lines: Vec<LabelLine> = read_jsonl(&dir.join("labels.jsonl"))?;
    Ok(lines.into_iter().map(|l| l.pair).collect())
}

pub fn denoiser_data(corpus: &Corpus) -> std::result::Result<DenoiserData, String> {
    let frames: Vec<Frame> = corpus.records.iter().map(|r| r.frame.clone()).collect();
    let z0 = pixels_to_latent(&frames_tensor(&frames)?);
    let cond = Tensor::new(
        vec![corpus.records.len(), COND_DIM],
        corpus
            .records
            .iter()
            .flat_map(|r| corpus.embedding(r).to_vec())
            .collect(),
    )
    .map_err(|e| e.to_string())?;
    Ok(DenoiserData { z0, cond })
}

pub fn classifier_data(
    corpus: &Corpus,
    labels: &[LabeledPair],
) -> std::result::Result<ClassifierData, String> {
    if labels.len() != corpus.records.len() {
        return Err(format!(
            "{} labels for {} images",
            labels.len(),
            corpus.records.len()
        ));
    }
    let frames: Vec<Frame> = corpus.records.iter().map(|r| r.frame.clone()).collect();
    Ok(ClassifierData {
        z0: pixels_to_latent(&frames_tensor(&frames)?),
        labels: labels.iter().map(|l| l.label).collect(),
    })
}

/// Runs every stage of the main comparison and writes the run manifest.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<Report> {
    let mut p = Pipeline::new(config.clone())?;
    let report = p.main_report()?;
    p.write_manifest()?;
    Ok(report)
}

/// Four train-by-eval variant cells over the lambda sweep, sharing stages
/// with [`run_pipeline`] under the same configuration.
pub fn transfer_study(config: &ExperimentConfig) -> Result<Report> {
    let mut p = Pipeline::new(config.clone())?;
    let report = p.transfer_report()?;
    p.write_manifest()?;
    Ok(report)
}
