use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use unic_core::diffusion::SamplerKind;
use unic_core::eval::{
    emit_report, load_report, run_pipeline, transfer_study, EvalError, ExperimentConfig,
    LabelSource, Pipeline,
};
use unic_core::labeling::LabelMode;
use unic_core::toy_world::Variant;

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (JSON). Missing fields are an error; start
    /// from `unic <cmd> --preset desk --print-config`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Built-in configuration used when --config is absent.
    #[arg(long, global = true, default_value = "desk")]
    preset: String,
    /// Run directory (overrides output_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed (overrides master_seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 for all cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Print the resolved configuration and exit.
    #[arg(long, global = true)]
    print_config: bool,
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the prompt set and rendered scenes.
    GenCorpus {
        #[arg(long)]
        n_prompts: Option<usize>,
        #[arg(long)]
        images_per_prompt: Option<usize>,
        /// Prompt de-duplication cosine threshold.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Label the corpus with the video prior or the image prior.
    Label {
        #[arg(long, default_value = "A")]
        variant: Variant,
        #[arg(long, default_value = "video-prior")]
        mode: LabelMode,
        /// Prompt de-duplication cosine threshold.
        #[arg(long)]
        threshold: Option<f64>,
        /// Keep labelled videos next to the label manifest.
        #[arg(long)]
        store_videos: bool,
    },
    /// Train the conditional denoiser.
    TrainDenoiser {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Train a classifier head on the frozen denoiser encoder.
    TrainClassifier {
        #[arg(long, default_value = "A")]
        variant: Variant,
        #[arg(long, default_value = "video-prior")]
        mode: LabelMode,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Draw one batch of samples.
    Sample {
        /// Sampler JSON: {lambda, sampler, steps, eta, seed, count}.
        #[arg(long)]
        sampler: Option<PathBuf>,
        #[arg(long)]
        lambda: Option<f64>,
        /// Labels of the guiding classifier.
        #[arg(long, default_value = "video-prior")]
        mode: LabelMode,
        #[arg(long, default_value = "A")]
        variant: Variant,
    },
    /// Evaluate one batch of samples: dynamic degree, logits, regenerated labels.
    Eval {
        #[arg(long, default_value_t = 0.0)]
        lambda: f64,
        #[arg(long, default_value = "video-prior")]
        mode: LabelMode,
        /// Variant of the guiding classifier's labels.
        #[arg(long, default_value = "A")]
        variant: Variant,
        /// Variant animating the samples (overrides eval_variant).
        #[arg(long)]
        eval_variant: Option<Variant>,
    },
    /// Full comparison: baseline, image priors and Uni-C over the lambda sweep.
    Sweep {
        /// Comma-separated guidance weights (must include 0).
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Train on one dynamics variant, evaluate on both.
    Transfer {
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Re-emit results.csv, results.md and sweep.svg from a report.json.
    Report {
        /// Report to render (default: <out>/report.json).
        #[arg(long)]
        from: Option<PathBuf>,
        /// Destination directory (default: the report's directory).
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

#[derive(Parser)]
#[command(name = "unic", version, about = "Classifier-guided diffusion on a toy image-to-video stack")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplerFile {
    lambda: Option<f64>,
    sampler: Option<SamplerKind>,
    steps: Option<usize>,
    eta: Option<f64>,
    seed: Option<u64>,
    count: Option<usize>,
}

/// An error tagged with the stage it came from.
struct Failure {
    stage: String,
    error: anyhow::Error,
}

fn at(stage: &str) -> impl FnOnce(anyhow::Error) -> Failure + '_ {
    move |error| Failure {
        stage: stage.to_string(),
        error,
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        let stage = e.stage().unwrap_or("config").to_string();
        Failure {
            stage,
            error: e.into(),
        }
    }
}

fn load_config(c: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => ExperimentConfig::preset(&c.preset)?,
    };
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = c.seed {
        cfg.master_seed = s;
    }
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn pipeline(cfg: ExperimentConfig, quiet: bool) -> Result<Pipeline, Failure> {
    let mut p = Pipeline::new(cfg)?;
    p.verbose = !quiet;
    Ok(p)
}

fn finish(p: &Pipeline) -> Result<(), Failure> {
    let path = p.write_manifest()?;
    eprintln!("manifest: {}", path.display());
    Ok(())
}

fn emit(report: &unic_core::eval::Report, dir: &Path) -> Result<(), Failure> {
    for f in emit_report(report, dir)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn run(w: Cli) -> Result<(), Failure> {
    let common = w.common;
    let mut cfg = load_config(&common).map_err(at("config"))?;
    let mut file_lambda = None;
    match &w.command {
        Command::GenCorpus {
            n_prompts,
            images_per_prompt,
            threshold,
        } => {
            if let Some(n) = n_prompts {
                cfg.corpus.n_prompts = *n;
            }
            if let Some(n) = images_per_prompt {
                cfg.corpus.images_per_prompt = *n;
            }
            if let Some(t) = threshold {
                cfg.corpus.dedup_threshold = *t;
            }
        }
        Command::Label {
            threshold,
            store_videos,
            ..
        } => {
            if let Some(t) = threshold {
                cfg.corpus.dedup_threshold = *t;
            }
            cfg.store_videos |= store_videos;
        }
        Command::TrainDenoiser { steps, lr } => {
            if let Some(s) = steps {
                cfg.denoiser_train.steps = *s;
            }
            if let Some(l) = lr {
                cfg.denoiser_train.lr = *l;
            }
        }
        Command::TrainClassifier { steps, lr, .. } => {
            if let Some(s) = steps {
                cfg.classifier_train.steps = *s;
            }
            if let Some(l) = lr {
                cfg.classifier_train.lr = *l;
            }
        }
        Command::Sample { sampler, .. } => {
            if let Some(path) = sampler {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))
                    .map_err(at("config"))?;
                let f: SamplerFile = serde_json::from_str(&text)
                    .with_context(|| format!("parsing {}", path.display()))
                    .map_err(at("config"))?;
                if let Some(k) = f.sampler {
                    cfg.sampler = k;
                }
                if let Some(s) = f.steps {
                    cfg.sampler_steps = s;
                }
                if let Some(e) = f.eta {
                    cfg.eta = e;
                }
                if let Some(s) = f.seed {
                    cfg.sample_seed = Some(s);
                }
                if let Some(n) = f.count {
                    cfg.samples = n;
                }
                file_lambda = f.lambda;
            }
        }
        Command::Eval { eval_variant, .. } => {
            if let Some(v) = eval_variant {
                cfg.eval_variant = *v;
            }
        }
        Command::Sweep { lambdas } | Command::Transfer { lambdas } => {
            if let Some(l) = lambdas {
                cfg.lambdas = l.clone();
            }
        }
        Command::Report { .. } => {}
    }
    if common.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }

    match w.command {
        Command::GenCorpus { .. } => {
            let mut p = pipeline(cfg, common.quiet)?;
            let (corpus, _) = p.corpus()?;
            let failures = corpus.records.iter().filter(|r| r.failure.is_some()).count();
            println!(
                "corpus: {} prompts, {} images ({} failure scenes)",
                corpus.prompts.len(),
                corpus.records.len(),
                failures
            );
            finish(&p)
        }
        Command::Label { variant, mode, .. } => {
            let mut p = pipeline(cfg, common.quiet)?;
            let source = source_for(mode, variant);
            let (labels, _) = p.labels(source)?;
            let pos = labels.iter().filter(|l| l.label).count();
            println!(
                "labels ({}): {pos}/{} positive",
                source_name(source),
                labels.len()
            );
            finish(&p)
        }
        Command::TrainDenoiser { .. } => {
            let mut p = pipeline(cfg, common.quiet)?;
            let (d, key) = p.denoiser()?;
            println!("denoiser {key}: {} parameters", d.params.numel());
            finish(&p)
        }
        Command::TrainClassifier { variant, mode, .. } => {
            let mut p = pipeline(cfg, common.quiet)?;
            let source = source_for(mode, variant);
            let ((_, m), key) = p.classifier(source)?;
            println!(
                "classifier {} {key}: held-out accuracy {:.3} at t < {} ({} of {} labels positive)",
                source_name(source),
                m.accuracy,
                m.t_max,
                m.positives,
                m.total
            );
            finish(&p)
        }
        Command::Sample {
            lambda,
            mode,
            variant,
            ..
        } => {
            let lambda = lambda
                .or(file_lambda)
                .unwrap_or_else(|| cfg.lambdas.iter().copied().fold(0.0, f64::max));
            let mut p = pipeline(cfg, common.quiet)?;
            let (s, key) = p.samples(Some(source_for(mode, variant)), lambda)?;
            println!("samples {key}: {:?} at lambda {lambda}", s.shape());
            finish(&p)
        }
        Command::Eval {
            lambda,
            mode,
            variant,
            ..
        } => {
            let eval = cfg.eval_variant;
            let mut p = pipeline(cfg, common.quiet)?;
            let source = source_for(mode, variant);
            let (samples, key) = p.samples(Some(source), lambda)?;
            let ev = p.evaluate(&samples, &key, eval)?;
            let ((clf, _), _) = p.classifier(source)?;
            let (mean, se) = p.logit_summary(&clf, &samples)?;
            println!(
                "{} lambda {lambda} eval {eval}: dynamic degree {:.4}, mean logit {mean:.3} ± {se:.3}, positive rate {:.4}, n = {}",
                source_name(source),
                ev.dynamic_degree,
                ev.positive_rate,
                samples.shape()[0]
            );
            finish(&p)
        }
        Command::Sweep { .. } => {
            let dir = cfg.output_dir.clone();
            let report = run_pipeline(&cfg)?;
            emit(&report, &dir)?;
            print!("{}", report.to_markdown());
            Ok(())
        }
        Command::Transfer { .. } => {
            let dir = cfg.output_dir.join("transfer");
            let report = transfer_study(&cfg)?;
            emit(&report, &dir)?;
            print!("{}", report.to_markdown());
            Ok(())
        }
        Command::Report { from, dir } => {
            let from = from.unwrap_or_else(|| cfg.output_dir.join("report.json"));
            let report = load_report(&from).map_err(|e| at("report")(e.into()))?;
            let dir = dir.unwrap_or_else(|| {
                from.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
            });
            emit_report(&report, &dir)
                .map_err(|e| at("report")(e.into()))?
                .iter()
                .for_each(|f| println!("wrote {}", f.display()));
            Ok(())
        }
    }
}

fn source_for(mode: LabelMode, variant: Variant) -> LabelSource {
    match mode {
        LabelMode::VideoPrior => LabelSource::video(variant),
        LabelMode::ImagePrior => LabelSource::image(),
    }
}

fn source_name(s: LabelSource) -> String {
    match s.variant {
        Some(v) => format!("{} ({v})", s.condition()),
        None => s.condition().to_string(),
    }
}

fn main() -> ExitCode {
    let w = Cli::parse();
    match run(w) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: stage {} failed: {:#}", f.stage, f.error);
            ExitCode::from(2)
        }
    }
}
