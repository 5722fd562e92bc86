use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unic_tensor::{Tape, Tensor};

use super::classifier::UniClassifier;
use super::denoiser::{Denoiser, DenoiserConfig};
use super::params::{hex_digest, Params};
use crate::diffusion::{DiffusionError, NoiseSchedule, NoisyBatch};
use crate::par::Workers;
use crate::rng::Rng;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("labeled set must contain both classes ({positives} positive of {total})")]
    SingleClass { positives: usize, total: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] unic_tensor::TensorError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error("writing loss curve: {0}")]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, TrainError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Self::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    pub optimizer: Optimizer,
    /// Examples per independently taped shard. Fixed so that results do not
    /// depend on the worker count.
    pub shard: usize,
    /// Held-out evaluation cadence in steps (the first and last step are
    /// always evaluated).
    pub eval_every: usize,
    pub held_out_fraction: f64,
    pub held_out_max: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn denoiser_default() -> Self {
        Self {
            steps: 5000,
            lr: 1e-3,
            batch: 32,
            clip_norm: 10.0,
            optimizer: Optimizer::adam(),
            shard: 8,
            eval_every: 100,
            held_out_fraction: 0.1,
            held_out_max: 256,
            seed: 1,
        }
    }

    pub fn classifier_default() -> Self {
        Self {
            lr: 1e-2,
            batch: 64,
            shard: 16,
            seed: 2,
            ..Self::denoiser_default()
        }
    }

    /// The long, low learning-rate recipe of the reference setup.
    pub fn paper_classifier() -> Self {
        Self {
            steps: 20_000,
            lr: 1e-5,
            eval_every: 1000,
            ..Self::classifier_default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.batch == 0 || self.shard == 0 {
            return bad("batch and shard must be positive");
        }
        if !(self.clip_norm >= 0.0) {
            return bad("clip_norm must be non-negative");
        }
        if !(0.0..1.0).contains(&self.held_out_fraction) {
            return bad("held_out_fraction must be in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: usize,
    /// Training-batch loss; absent for the initial evaluation.
    pub loss: Option<f64>,
    pub held_out_loss: Option<f64>,
}

pub fn write_loss_csv(path: &Path, curve: &[LossPoint]) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "step,loss,held_out_loss")?;
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.10e}")).unwrap_or_default();
    for p in curve {
        writeln!(f, "{},{},{}", p.step, cell(p.loss), cell(p.held_out_loss))?;
    }
    f.flush()
}

/// Clean images `[M,1,S,S]` with their conditions `[M, COND_DIM]`.
#[derive(Clone, Debug)]
pub struct DenoiserData {
    pub z0: Tensor,
    pub cond: Tensor,
}

#[derive(Clone, Debug)]
pub struct ClassifierData {
    pub z0: Tensor,
    pub labels: Vec<bool>,
}

impl ClassifierData {
    pub fn hash(&self) -> String {
        let mut bytes = unic_tensor::serialize::to_bytes(&self.z0);
        bytes.extend(self.labels.iter().map(|&l| l as u8));
        hex_digest(&bytes)
    }
}

impl DenoiserData {
    pub fn hash(&self) -> String {
        let mut bytes = unic_tensor::serialize::to_bytes(&self.z0);
        bytes.extend(unic_tensor::serialize::to_bytes(&self.cond));
        hex_digest(&bytes)
    }
}

pub struct Trained<M> {
    pub model: M,
    pub curve: Vec<LossPoint>,
    /// Dataset indices kept out of training.
    pub held_out: Vec<usize>,
}

fn rows(t: &Tensor, idx: &[usize]) -> Result<Tensor> {
    let parts: Vec<Tensor> = idx.iter().map(|&i| t.index_outer(i)).collect();
    Ok(Tensor::stack_outer(&parts)?)
}

fn shuffled(n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        idx.swap(i, rng.below(i + 1));
    }
    idx
}

struct Optim {
    cfg: TrainConfig,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
    t: i32,
}

impl Optim {
    fn new(cfg: &TrainConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            moments: BTreeMap::new(),
            t: 0,
        }
    }

    fn apply(&mut self, params: &mut Params, mut grads: BTreeMap<String, Vec<f64>>) {
        let norm = grads
            .values()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if self.cfg.clip_norm > 0.0 && norm > self.cfg.clip_norm {
            let s = self.cfg.clip_norm / norm;
            grads.values_mut().for_each(|g| g.iter_mut().for_each(|v| *v *= s));
        }
        self.t += 1;
        let lr = self.cfg.lr;
        for (name, g) in grads {
            let p = params.get_mut(&name).expect("gradient for known parameter");
            match self.cfg.optimizer {
                Optimizer::Sgd => {
                    p.data_mut().iter_mut().zip(&g).for_each(|(w, d)| *w -= lr * d);
                }
                Optimizer::Adam {
                    beta1,
                    beta2,
                    epsilon,
                } => {
                    let (m, v) = self
                        .moments
                        .entry(name)
                        .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
                    let c1 = 1.0 - beta1.powi(self.t);
                    let c2 = 1.0 - beta2.powi(self.t);
                    for (((w, d), mi), vi) in p.data_mut().iter_mut().zip(&g).zip(m).zip(v) {
                        *mi = beta1 * *mi + (1.0 - beta1) * d;
                        *vi = beta2 * *vi + (1.0 - beta2) * d * d;
                        *w -= lr * (*mi / c1) / ((*vi / c2).sqrt() + epsilon);
                    }
                }
            }
        }
    }
}

type ShardOut = (f64, BTreeMap<String, Vec<f64>>);

/// Sums shard losses and gradients in shard order.
fn reduce(step: usize, parts: Vec<ShardOut>) -> Result<ShardOut> {
    let mut loss = 0.0;
    let mut grads: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (l, g) in parts {
        loss += l;
        for (k, v) in g {
            match grads.get_mut(&k) {
                Some(acc) => acc.iter_mut().zip(&v).for_each(|(a, b)| *a += b),
                None => {
                    grads.insert(k, v);
                }
            }
        }
    }
    if !loss.is_finite() || grads.values().flatten().any(|v| !v.is_finite()) {
        return Err(TrainError::Diverged {
            step,
            detail: format!("loss {loss}"),
        });
    }
    Ok((loss, grads))
}

fn diverged(step: usize) -> impl Fn(unic_tensor::TensorError) -> TrainError {
    move |e| match e {
        unic_tensor::TensorError::NonFinite { op } => TrainError::Diverged {
            step,
            detail: format!("non-finite value in {op}"),
        },
        other => other.into(),
    }
}

fn split(n: usize, cfg: &TrainConfig, rng: &mut Rng) -> (Vec<usize>, Vec<usize>) {
    let order = shuffled(n, rng);
    let held = ((n as f64 * cfg.held_out_fraction).round() as usize)
        .min(cfg.held_out_max)
        .min(n.saturating_sub(1));
    let (h, t) = order.split_at(held);
    let mut h = h.to_vec();
    h.sort_unstable();
    (t.to_vec(), h)
}

fn denoiser_eval(
    model: &Denoiser,
    held: &NoisyBatch,
    cond: &Tensor,
    shard: usize,
    workers: &Workers,
) -> Result<f64> {
    let n = held.t.len();
    let parts = workers.try_map_range(n.div_ceil(shard), |s| -> Result<f64> {
        let r = s * shard..((s + 1) * shard).min(n);
        let sub = held.slice(r.clone())?;
        let c = rows(cond, &r.clone().collect::<Vec<_>>())?;
        let pred = model.predict(&sub.z_t, &sub.t, &c)?;
        let se: f64 = pred
            .data()
            .iter()
            .zip(sub.eps.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        Ok(se)
    })?;
    Ok(parts.iter().sum::<f64>() / held.eps.numel() as f64)
}

/// Minimizes the noise-prediction loss; returns the model, its loss curve,
/// and the held-out indices.
pub fn train_denoiser(
    data: &DenoiserData,
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
    model_cfg: &DenoiserConfig,
    workers: &Workers,
) -> Result<Trained<Denoiser>> {
    cfg.validate()?;
    let m = data.z0.shape()[0];
    if m == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let root = Rng::new(cfg.seed);
    let mut model = Denoiser::init(model_cfg.clone(), &mut root.derive("init"));
    let (train, held) = split(m, cfg, &mut root.derive("split"));
    let held_batch = if held.is_empty() {
        None
    } else {
        let z0 = rows(&data.z0, &held)?;
        Some((
            NoisyBatch::draw(&z0, schedule, &mut root.derive("held_out"))?,
            rows(&data.cond, &held)?,
        ))
    };
    let eval = |model: &Denoiser| -> Result<Option<f64>> {
        held_batch
            .as_ref()
            .map(|(b, c)| denoiser_eval(model, b, c, cfg.shard, workers))
            .transpose()
    };

    let mut curve = Vec::with_capacity(cfg.steps + 1);
    curve.push(LossPoint {
        step: 0,
        loss: None,
        held_out_loss: eval(&model)?,
    });
    let mut optim = Optim::new(cfg);
    for step in 1..=cfg.steps {
        let mut brng = root.derive_indexed("batch", step as u64);
        let idx: Vec<usize> = (0..cfg.batch).map(|_| train[brng.below(train.len())]).collect();
        let z0 = rows(&data.z0, &idx)?;
        let cond = rows(&data.cond, &idx)?;
        let noisy = NoisyBatch::draw(&z0, schedule, &mut root.derive_indexed("noise", step as u64))?;
        let b = cfg.batch;
        let parts = workers.try_map_range(b.div_ceil(cfg.shard), |s| -> Result<ShardOut> {
            let r = s * cfg.shard..((s + 1) * cfg.shard).min(b);
            let weight = r.len() as f64 / b as f64;
            let sub = noisy.slice(r.clone())?;
            let c = rows(&cond, &r.collect::<Vec<_>>())?;
            let mut tape = Tape::new();
            let p = model.params.bind(&mut tape, true)?;
            let loss = sub
                .loss(&mut tape, &c, |tape, z, t, c| model.forward(tape, &p, z, t, c))
                .map_err(|e| match e {
                    DiffusionError::Tensor(t) => diverged(step)(t),
                    other => other.into(),
                })?;
            let scaled = tape.scale(loss, weight)?;
            tape.backward(scaled)?;
            let grads = p
                .iter()
                .map(|(k, v)| (k.clone(), tape.grad(*v).expect("param reached").to_vec()))
                .collect();
            Ok((tape.value(scaled).item()?, grads))
        })?;
        let (loss, grads) = reduce(step, parts)?;
        optim.apply(&mut model.params, grads);
        let held_out_loss = if step % cfg.eval_every.max(1) == 0 || step == cfg.steps {
            eval(&model)?
        } else {
            None
        };
        curve.push(LossPoint {
            step,
            loss: Some(loss),
            held_out_loss,
        });
    }
    Ok(Trained {
        model,
        curve,
        held_out: held,
    })
}

/// Binary cross-entropy (mean over the batch) of `logits` against labels.
fn bce(tape: &mut Tape, logits: unic_tensor::Var, labels: &[bool]) -> unic_tensor::Result<unic_tensor::Var> {
    let n = labels.len();
    let signs = Tensor::new(
        vec![n, 1],
        labels.iter().map(|&y| if y { 1.0 } else { -1.0 }).collect(),
    )?;
    let s = tape.constant(signs)?;
    let signed = tape.mul(logits, s)?;
    let ls = tape.log_sigmoid(signed)?;
    let m = tape.mean(ls)?;
    tape.scale(m, -1.0)
}

/// Noisy inputs for classifier training or evaluation: `t` uniform in
/// `[0, t_max)`.
fn noisy_inputs(
    z0: &Tensor,
    t_max: usize,
    schedule: &NoiseSchedule,
    rng: &mut Rng,
) -> Result<NoisyBatch> {
    let n = z0.shape()[0];
    let t = (0..n).map(|_| rng.below(t_max)).collect();
    let eps = rng.normal_tensor(z0.shape());
    Ok(NoisyBatch::with(z0, t, eps, schedule)?)
}

/// Fraction of `idx` classified correctly at timesteps drawn uniformly from
/// `[0, t_max)`, with the noise fixed by `seed`.
pub fn classifier_accuracy(
    clf: &UniClassifier,
    data: &ClassifierData,
    idx: &[usize],
    schedule: &NoiseSchedule,
    t_max: usize,
    seed: u64,
    workers: &Workers,
) -> Result<f64> {
    if idx.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let z0 = rows(&data.z0, idx)?;
    let batch = noisy_inputs(&z0, t_max, schedule, &mut Rng::new(seed).derive("accuracy"))?;
    let shard = 32;
    let n = idx.len();
    let hits = workers.try_map_range(n.div_ceil(shard), |s| -> Result<usize> {
        let r = s * shard..((s + 1) * shard).min(n);
        let sub = batch.slice(r.clone())?;
        let logits = clf.logits(&sub.z_t, &sub.t)?;
        Ok(logits
            .iter()
            .zip(&idx[r])
            .filter(|(l, &i)| (**l > 0.0) == data.labels[i])
            .count())
    })?;
    Ok(hits.iter().sum::<usize>() as f64 / n as f64)
}

/// Class-stratified split whose held-out part has equal class counts, so
/// chance-level accuracy on it is exactly one half.
fn balanced_split(labels: &[bool], cfg: &TrainConfig, rng: &mut Rng) -> (Vec<usize>, Vec<usize>) {
    let order = shuffled(labels.len(), rng);
    let pos: Vec<usize> = order.iter().copied().filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = order.iter().copied().filter(|&i| !labels[i]).collect();
    let per_class = ((labels.len() as f64 * cfg.held_out_fraction / 2.0).round() as usize)
        .min(cfg.held_out_max / 2)
        .min(pos.len().saturating_sub(1))
        .min(neg.len().saturating_sub(1));
    let mut held: Vec<usize> = pos[..per_class].iter().chain(&neg[..per_class]).copied().collect();
    held.sort_unstable();
    let train = order.into_iter().filter(|i| held.binary_search(i).is_err()).collect();
    (train, held)
}

const TRAINED_HEAD: [&str; 2] = ["head.w", "head.b"];
const STANDARDIZE_SAMPLES: usize = 512;

/// Sets the head's fixed feature standardization from pooled features of
/// training examples at uniformly drawn timesteps.
fn standardize_head(
    clf: &mut UniClassifier,
    data: &ClassifierData,
    train: &[usize],
    schedule: &NoiseSchedule,
    rng: &mut Rng,
    workers: &Workers,
) -> Result<()> {
    let idx: Vec<usize> = (0..STANDARDIZE_SAMPLES.min(train.len()))
        .map(|_| train[rng.below(train.len())])
        .collect();
    let z0 = rows(&data.z0, &idx)?;
    let noisy = noisy_inputs(&z0, schedule.len(), schedule, rng)?;
    let shard = 32;
    let n = idx.len();
    let parts = workers.try_map_range(n.div_ceil(shard), |s| -> Result<Tensor> {
        let sub = noisy.slice(s * shard..((s + 1) * shard).min(n))?;
        Ok(clf.features(&sub.z_t, &sub.t)?)
    })?;
    let f = Tensor::stack_outer(&parts)?;
    let c = clf.feature_dim();
    let f = f.data();
    let rows_n = f.len() / c;
    let mut shift = vec![0.0; c];
    let mut gain = vec![0.0; c];
    for j in 0..c {
        let col = (0..rows_n).map(|i| f[i * c + j]);
        let mean = col.clone().sum::<f64>() / rows_n as f64;
        let var = col.map(|x| (x - mean).powi(2)).sum::<f64>() / rows_n as f64;
        shift[j] = mean;
        gain[j] = 1.0 / var.sqrt().max(1e-6);
    }
    clf.head.insert("head.shift", Tensor::new(vec![1, c], shift)?);
    clf.head.insert("head.gain", Tensor::new(vec![1, c], gain)?);
    Ok(())
}

/// Trains the linear head of a classifier on the frozen encoder of
/// `denoiser` with binary cross-entropy on noisy inputs. Batches draw
/// positives and negatives in equal numbers.
pub fn train_classifier(
    data: &ClassifierData,
    denoiser: &Denoiser,
    schedule: &NoiseSchedule,
    cfg: &TrainConfig,
    workers: &Workers,
) -> Result<Trained<UniClassifier>> {
    cfg.validate()?;
    let m = data.labels.len();
    if m == 0 {
        return Err(TrainError::EmptyDataset);
    }
    let positives = data.labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == m {
        return Err(TrainError::SingleClass {
            positives,
            total: m,
        });
    }
    let root = Rng::new(cfg.seed);
    let mut clf = UniClassifier::new(denoiser);
    let (train, held) = balanced_split(&data.labels, cfg, &mut root.derive("split"));
    let pos: Vec<usize> = train.iter().copied().filter(|&i| data.labels[i]).collect();
    let neg: Vec<usize> = train.iter().copied().filter(|&i| !data.labels[i]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(TrainError::SingleClass {
            positives: pos.len(),
            total: train.len(),
        });
    }

    standardize_head(&mut clf, data, &train, schedule, &mut root.derive("standardize"), workers)?;

    let held_batch = if held.is_empty() {
        None
    } else {
        let z0 = rows(&data.z0, &held)?;
        let labels: Vec<bool> = held.iter().map(|&i| data.labels[i]).collect();
        let b = noisy_inputs(&z0, schedule.len(), schedule, &mut root.derive("held_out"))?;
        Some((b, labels))
    };
    // Held-out features depend only on the frozen encoder, so compute once.
    let held_features = held_batch
        .as_ref()
        .map(|(b, labels)| -> Result<(Tensor, Vec<bool>)> {
            Ok((clf.features(&b.z_t, &b.t)?, labels.clone()))
        })
        .transpose()?;
    let eval = |clf: &UniClassifier| -> Result<Option<f64>> {
        held_features
            .as_ref()
            .map(|(f, labels)| -> Result<f64> {
                let mut tape = Tape::new();
                let head = clf.head.bind(&mut tape, false)?;
                let fv = tape.constant(f.clone())?;
                let l = clf.head_logits(&mut tape, &head, fv)?;
                let loss = bce(&mut tape, l, labels)?;
                Ok(tape.value(loss).item()?)
            })
            .transpose()
    };

    let mut curve = Vec::with_capacity(cfg.steps + 1);
    curve.push(LossPoint {
        step: 0,
        loss: None,
        held_out_loss: eval(&clf)?,
    });
    let mut optim = Optim::new(cfg);
    for step in 1..=cfg.steps {
        let mut brng = root.derive_indexed("batch", step as u64);
        let idx: Vec<usize> = (0..cfg.batch)
            .map(|k| {
                let pool = if k % 2 == 0 { &pos } else { &neg };
                pool[brng.below(pool.len())]
            })
            .collect();
        let labels: Vec<bool> = idx.iter().map(|&i| data.labels[i]).collect();
        let z0 = rows(&data.z0, &idx)?;
        let noisy = noisy_inputs(
            &z0,
            schedule.len(),
            schedule,
            &mut root.derive_indexed("noise", step as u64),
        )?;
        let b = cfg.batch;
        let feats = workers.try_map_range(b.div_ceil(cfg.shard), |s| -> Result<Tensor> {
            let r = s * cfg.shard..((s + 1) * cfg.shard).min(b);
            let sub = noisy.slice(r)?;
            Ok(clf.features(&sub.z_t, &sub.t)?)
        })?;
        let feats = Tensor::stack_outer(&feats)?;
        let mut tape = Tape::new();
        let head = clf.head.bind(&mut tape, true)?;
        let fv = tape.constant(feats)?;
        let l = clf.head_logits(&mut tape, &head, fv)?;
        let loss = bce(&mut tape, l, &labels).map_err(diverged(step))?;
        tape.backward(loss)?;
        let grads: BTreeMap<String, Vec<f64>> = head
            .iter()
            .filter(|(k, _)| TRAINED_HEAD.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), tape.grad(*v).expect("head reached").to_vec()))
            .collect();
        let (loss, grads) = reduce(step, vec![(tape.value(loss).item()?, grads)])?;
        optim.apply(&mut clf.head, grads);
        let held_out_loss = if step % cfg.eval_every.max(1) == 0 || step == cfg.steps {
            eval(&clf)?
        } else {
            None
        };
        curve.push(LossPoint {
            step,
            loss: Some(loss),
            held_out_loss,
        });
    }
    Ok(Trained {
        model: clf,
        curve,
        held_out: held,
    })
}
