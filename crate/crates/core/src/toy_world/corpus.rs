use serde::{Deserialize, Serialize};

use super::frame::{Frame, FRAME_SIZE};
use super::scene::{render, ObjectKind, SceneSpec};
use crate::labeling::is_novel;
use crate::models::COND_DIM;
use crate::par::Workers;
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub n_prompts: usize,
    pub images_per_prompt: usize,
    /// Fraction of scenes drawn from a failure pattern.
    pub failure_rate: f64,
    /// Probability that a candidate prompt is a near copy of an earlier one.
    pub duplicate_rate: f64,
    pub dedup_threshold: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_prompts: 410,
            images_per_prompt: 5,
            failure_rate: 0.4,
            duplicate_rate: 0.1,
            dedup_threshold: 0.8,
        }
    }
}

impl CorpusConfig {
    /// Reference scale: 8,406 prompts, five images each.
    pub fn paper() -> Self {
        Self {
            n_prompts: 8406,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_prompts == 0 || self.images_per_prompt == 0 {
            return Err("corpus counts must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.failure_rate) || !(0.0..1.0).contains(&self.duplicate_rate) {
            return Err("rates must lie in [0, 1]".into());
        }
        if !(self.dedup_threshold > 0.0 && self.dedup_threshold < 1.0) {
            return Err("dedup threshold must lie in (0, 1)".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    BorderTouching,
    LowMobility,
    Incomplete,
}

/// A synthetic prompt: the object kind it asks for and its unit embedding
/// (kind one-hot plus nuisance coordinates), which doubles as the
/// condition vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub id: usize,
    pub kind: ObjectKind,
    pub embedding: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusRecord {
    pub prompt_id: usize,
    pub image_index: usize,
    pub scene: SceneSpec,
    pub failure: Option<FailureKind>,
    pub frame: Frame,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub prompts: Vec<Prompt>,
    pub records: Vec<CorpusRecord>,
}

impl Corpus {
    pub fn embedding(&self, record: &CorpusRecord) -> &[f64] {
        &self.prompts[record.prompt_id].embedding
    }
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn fresh_prompt(rng: &mut Rng) -> (ObjectKind, Vec<f64>) {
    let kind = if rng.bernoulli(0.5) {
        ObjectKind::Disc
    } else {
        ObjectKind::Bar
    };
    let mut v = vec![0.0; COND_DIM];
    v[if kind == ObjectKind::Disc { 0 } else { 1 }] = 1.0;
    for x in &mut v[2..] {
        *x = 0.3 * rng.normal();
    }
    (kind, unit(v))
}

/// Draws candidates (some deliberately near-duplicate) until `n` survive
/// greedy de-duplication.
fn draw_prompts(cfg: &CorpusConfig, rng: &mut Rng) -> Vec<Prompt> {
    let mut kept: Vec<Prompt> = Vec::with_capacity(cfg.n_prompts);
    let mut history: Vec<(ObjectKind, Vec<f64>)> = Vec::new();
    while kept.len() < cfg.n_prompts {
        let cand = if !history.is_empty() && rng.bernoulli(cfg.duplicate_rate) {
            let (kind, src) = history[rng.below(history.len())].clone();
            let noisy = src.iter().map(|x| x + 0.05 * rng.normal()).collect();
            (kind, unit(noisy))
        } else {
            fresh_prompt(rng)
        };
        history.push(cand.clone());
        let embs: Vec<&[f64]> = kept.iter().map(|p| p.embedding.as_slice()).collect();
        if is_novel(&embs, &cand.1, cfg.dedup_threshold) {
            kept.push(Prompt {
                id: kept.len(),
                kind: cand.0,
                embedding: cand.1,
            });
        }
    }
    kept
}

fn radius_for(kind: ObjectKind, rng: &mut Rng) -> f64 {
    match kind {
        ObjectKind::Disc => rng.range(0.20, 0.25),
        ObjectKind::Bar => rng.range(0.28, 0.31),
    }
}

/// Places an object so that every border gap is at least `min_gap` pixels
/// (and optionally one chosen side has exactly `exact_gap`).
fn place(
    kind: ObjectKind,
    r: f64,
    completeness: f64,
    min_gap: f64,
    exact: Option<(usize, f64)>,
    rng: &mut Rng,
) -> SceneSpec {
    let s = FRAME_SIZE as f64;
    let a = r * s;
    let b = a * kind.aspect();
    let w = 2.0 * a * completeness;
    // left edge in [min_gap, s - min_gap - w]; top edge likewise.
    let mut left = rng.range(min_gap, (s - min_gap - w).max(min_gap));
    let mut top = rng.range(min_gap, (s - min_gap - 2.0 * b).max(min_gap));
    if let Some((side, gap)) = exact {
        match side {
            0 => left = gap,
            1 => left = s - gap - w,
            2 => top = gap,
            _ => top = s - gap - 2.0 * b,
        }
    }
    SceneSpec::new(kind, (left + a) / s, (top + b) / s, r, completeness)
        .expect("placement stays within range")
}

fn sample_scene(kind: ObjectKind, failure: Option<FailureKind>, rng: &mut Rng) -> SceneSpec {
    let r = radius_for(kind, rng);
    match failure {
        None => place(kind, r, 1.0, 5.0, None, rng),
        Some(FailureKind::LowMobility) => {
            let gap = rng.range(1.0, 2.0);
            place(kind, r, 1.0, gap, Some((rng.below(4), gap)), rng)
        }
        Some(FailureKind::BorderTouching) => {
            let gap = -rng.range(1.0, 3.0);
            place(kind, r, 1.0, 1.0, Some((rng.below(4), gap)), rng)
        }
        Some(FailureKind::Incomplete) => place(kind, r, rng.range(0.4, 0.6), 5.0, None, rng),
    }
}

/// Prompts (after de-duplication) and `images_per_prompt` rendered scenes
/// for each; roughly `failure_rate` of scenes carry a failure pattern.
pub fn generate_corpus(cfg: &CorpusConfig, rng: &Rng, workers: &Workers) -> Corpus {
    let prompts = draw_prompts(cfg, &mut rng.derive("prompts"));
    let per_prompt = workers.map(&prompts, |p| {
        let mut r = rng.derive_indexed("images", p.id as u64);
        (0..cfg.images_per_prompt)
            .map(|j| {
                let failure = if r.bernoulli(cfg.failure_rate) {
                    Some(match r.below(3) {
                        0 => FailureKind::BorderTouching,
                        1 => FailureKind::LowMobility,
                        _ => FailureKind::Incomplete,
                    })
                } else {
                    None
                };
                let scene = sample_scene(p.kind, failure, &mut r);
                CorpusRecord {
                    prompt_id: p.id,
                    image_index: j,
                    scene,
                    failure,
                    frame: render(&scene).expect("corpus objects are large"),
                }
            })
            .collect::<Vec<_>>()
    });
    Corpus {
        prompts,
        records: per_prompt.into_iter().flatten().collect(),
    }
}
