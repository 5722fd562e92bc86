use serde::{Deserialize, Serialize};
use unic_tensor::Tensor;

use super::{latent_to_pixels, DiffusionError, NoiseSchedule, Result, LATENT_MAX, LATENT_MIN};
use crate::par::Workers;
use crate::rng::Rng;

/// Noise prediction `eps_theta(z_t, c, t)` for a batch sharing one timestep.
pub trait NoisePredictor: Sync {
    fn predict_noise(&self, z: &Tensor, t: usize, cond: &Tensor) -> unic_tensor::Result<Tensor>;
}

/// `grad_z log p(y = 1 | z_t)` for each sample of a batch.
pub trait GuidanceScore: Sync {
    fn grad_log_prob(&self, z: &Tensor, t: usize) -> unic_tensor::Result<Tensor>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Ddpm,
    Ddim,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub lambda: f64,
    pub sampler: SamplerKind,
    pub steps: usize,
    #[serde(default)]
    pub eta: f64,
    pub seed: u64,
    /// Clamp each step's clean-sample estimate to the pixel range and
    /// recompute the noise estimate from it.
    #[serde(default)]
    pub clip_x0: bool,
    /// Per-step on/off switch for guidance, in sampling order. Missing
    /// entries (or no mask) mean guidance is applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guidance_mask: Option<Vec<bool>>,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            sampler: SamplerKind::Ddim,
            steps: 20,
            eta: 0.0,
            seed: 0,
            clip_x0: false,
            guidance_mask: None,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(DiffusionError::Config(format!("lambda = {}", self.lambda)));
        }
        if self.steps == 0 {
            return Err(DiffusionError::Config("steps must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(DiffusionError::Config(format!("eta = {}", self.eta)));
        }
        Ok(())
    }

    fn guided_at(&self, step: usize) -> bool {
        self.lambda > 0.0
            && self
                .guidance_mask
                .as_ref()
                .and_then(|m| m.get(step).copied())
                .unwrap_or(true)
    }
}

/// `eps_pred - lambda * sqrt(1 - alpha_bar[t]) * grad_logp`.
pub fn guided_epsilon(
    eps_pred: &Tensor,
    grad_logp: &Tensor,
    t: usize,
    lambda: f64,
    schedule: &NoiseSchedule,
) -> Result<Tensor> {
    if !(lambda >= 0.0) {
        return Err(DiffusionError::Config(format!("lambda = {lambda}")));
    }
    let ab = schedule.alpha_bar(t)?;
    if lambda == 0.0 {
        if eps_pred.shape() != grad_logp.shape() {
            return Err(unic_tensor::TensorError::ShapeMismatch {
                op: "guided_epsilon",
                left: eps_pred.shape().to_vec(),
                right: grad_logp.shape().to_vec(),
            }
            .into());
        }
        return Ok(eps_pred.clone());
    }
    Ok(eps_pred.axpy(-lambda * (1.0 - ab).sqrt(), grad_logp)?)
}

/// A batch of reverse trajectories in flight.
///
/// `t` is the timestep `z` currently sits at, or `None` once the trajectory
/// has reached the clean sample. `step` indexes the sampler's timestep
/// sequence. Each sample owns its own random stream so results do not
/// depend on how samples are batched.
#[derive(Clone, Debug)]
pub struct DiffusionState {
    pub z: Tensor,
    pub cond: Tensor,
    pub t: Option<usize>,
    pub step: usize,
    rngs: Vec<Rng>,
}

impl DiffusionState {
    /// Starts from `z_T ~ N(0, I)`, one stream per sample.
    pub fn start(
        shape: &[usize],
        cond: Tensor,
        guidance: &GuidanceConfig,
        schedule: &NoiseSchedule,
        rngs: Vec<Rng>,
    ) -> Result<Self> {
        guidance.validate()?;
        let seq = schedule.timesteps(guidance.steps)?;
        assert_eq!(rngs.len(), shape[0], "one stream per sample");
        let mut rngs = rngs;
        let parts: Vec<Tensor> = rngs
            .iter_mut()
            .map(|r| {
                let mut s = shape.to_vec();
                s[0] = 1;
                r.normal_tensor(&s)
            })
            .collect();
        Ok(Self {
            z: Tensor::stack_outer(&parts)?,
            cond,
            t: Some(seq[0]),
            step: 0,
            rngs,
        })
    }

    /// Resumes from an explicit latent at timestep `t`.
    pub fn at(z: Tensor, cond: Tensor, t: usize, step: usize, rngs: Vec<Rng>) -> Self {
        Self {
            z,
            cond,
            t: Some(t),
            step,
            rngs,
        }
    }

    pub fn is_clean(&self) -> bool {
        self.t.is_none()
    }

    fn add_noise(&mut self, z: &mut Tensor, sigma: f64) {
        let per = z.numel() / self.rngs.len();
        for (chunk, rng) in z.data_mut().chunks_exact_mut(per).zip(&mut self.rngs) {
            chunk.iter_mut().for_each(|v| *v += sigma * rng.normal());
        }
    }
}

struct StepInputs {
    next: Option<usize>,
    eps: Tensor,
    x0: Tensor,
    ab: f64,
    ab_prev: f64,
}

fn prepare(
    state: &DiffusionState,
    denoiser: &dyn NoisePredictor,
    classifier: Option<&dyn GuidanceScore>,
    guidance: &GuidanceConfig,
    schedule: &NoiseSchedule,
    explicit_next: Option<Option<usize>>,
) -> Result<StepInputs> {
    guidance.validate()?;
    if guidance.lambda > 0.0 && classifier.is_none() {
        return Err(DiffusionError::MissingClassifier(guidance.lambda));
    }
    let t = state
        .t
        .ok_or_else(|| DiffusionError::Config("trajectory already clean".into()))?;
    schedule.check(t)?;
    let next = match explicit_next {
        Some(n) => n,
        None => {
            let seq = schedule.timesteps(guidance.steps)?;
            seq.get(state.step + 1).copied()
        }
    };
    if let Some(n) = next {
        if n >= t {
            return Err(DiffusionError::Timestep { t: n, len: t });
        }
    }
    let mut eps = denoiser.predict_noise(&state.z, t, &state.cond)?;
    if guidance.guided_at(state.step) {
        let clf = classifier.expect("checked above");
        let g = clf.grad_log_prob(&state.z, t)?;
        eps = guided_epsilon(&eps, &g, t, guidance.lambda, schedule)?;
    }
    let ab = schedule.alpha_bar(t)?;
    let ab_prev = match next {
        Some(n) => schedule.alpha_bar(n)?,
        None => 1.0,
    };
    let mut x0 = state
        .z
        .axpy(-(1.0 - ab).sqrt(), &eps)?
        .scale(1.0 / ab.sqrt());
    if guidance.clip_x0 {
        x0 = x0.clamp(LATENT_MIN, LATENT_MAX);
        eps = state.z.axpy(-ab.sqrt(), &x0)?.scale(1.0 / (1.0 - ab).sqrt());
    }
    Ok(StepInputs {
        next,
        eps,
        x0,
        ab,
        ab_prev,
    })
}

fn advance(mut state: DiffusionState, z: Tensor, next: Option<usize>) -> Result<DiffusionState> {
    if !z.is_finite() {
        return Err(unic_tensor::TensorError::NonFinite { op: "sampler" }.into());
    }
    state.z = z;
    state.t = next;
    state.step += 1;
    Ok(state)
}

/// One DDIM update towards the next timestep of the sampling sequence (or to
/// the clean sample after the last one).
pub fn ddim_step(
    state: DiffusionState,
    denoiser: &dyn NoisePredictor,
    classifier: Option<&dyn GuidanceScore>,
    guidance: &GuidanceConfig,
    schedule: &NoiseSchedule,
) -> Result<DiffusionState> {
    ddim_step_to(state, None, denoiser, classifier, guidance, schedule)
}

/// [`ddim_step`] with an explicit target timestep (`Some(None)` = clean).
pub fn ddim_step_to(
    mut state: DiffusionState,
    target: Option<Option<usize>>,
    denoiser: &dyn NoisePredictor,
    classifier: Option<&dyn GuidanceScore>,
    guidance: &GuidanceConfig,
    schedule: &NoiseSchedule,
) -> Result<DiffusionState> {
    let s = prepare(&state, denoiser, classifier, guidance, schedule, target)?;
    let sigma = guidance.eta
        * ((1.0 - s.ab_prev) / (1.0 - s.ab)).sqrt()
        * (1.0 - s.ab / s.ab_prev).sqrt();
    let dir = (1.0 - s.ab_prev - sigma * sigma).max(0.0).sqrt();
    let mut z = s.x0.scale(s.ab_prev.sqrt()).axpy(dir, &s.eps)?;
    if sigma > 0.0 {
        state.add_noise(&mut z, sigma);
    }
    advance(state, z, s.next)
}

/// One ancestral DDPM update: a draw from the Gaussian posterior
/// `q(z_prev | z_t, x0_hat)`, valid for strided timestep sequences too.
pub fn ddpm_step(
    mut state: DiffusionState,
    denoiser: &dyn NoisePredictor,
    classifier: Option<&dyn GuidanceScore>,
    guidance: &GuidanceConfig,
    schedule: &NoiseSchedule,
) -> Result<DiffusionState> {
    let s = prepare(&state, denoiser, classifier, guidance, schedule, None)?;
    let alpha = s.ab / s.ab_prev;
    let beta = 1.0 - alpha;
    let c0 = s.ab_prev.sqrt() * beta / (1.0 - s.ab);
    let ct = alpha.sqrt() * (1.0 - s.ab_prev) / (1.0 - s.ab);
    let mut z = s.x0.scale(c0).axpy(ct, &state.z)?;
    let var = beta * (1.0 - s.ab_prev) / (1.0 - s.ab);
    if s.next.is_some() && var > 0.0 {
        state.add_noise(&mut z, var.sqrt());
    }
    advance(state, z, s.next)
}

/// Runs a batch of trajectories to completion and returns pixels clamped
/// to `[0, 1]`.
///
/// `cond` is `[N, D]`; sample `i` draws from `Rng::new(seed)` derived with
/// index `first_index + i`, so any split of a larger run into batches gives
/// the same samples.
#[allow(clippy::too_many_arguments)]
pub fn sample(
    denoiser: &dyn NoisePredictor,
    classifier: Option<&dyn GuidanceScore>,
    cond: &Tensor,
    latent: &[usize],
    guidance: &GuidanceConfig,
    schedule: &NoiseSchedule,
    first_index: usize,
) -> Result<Tensor> {
    let n = cond.shape()[0];
    let root = Rng::new(guidance.seed);
    let rngs = (0..n)
        .map(|i| root.derive_indexed("sample", (first_index + i) as u64))
        .collect();
    let mut shape = vec![n];
    shape.extend_from_slice(latent);
    let mut state = DiffusionState::start(&shape, cond.clone(), guidance, schedule, rngs)?;
    while !state.is_clean() {
        state = match guidance.sampler {
            SamplerKind::Ddim => ddim_step(state, denoiser, classifier, guidance, schedule)?,
            SamplerKind::Ddpm => ddpm_step(state, denoiser, classifier, guidance, schedule)?,
        };
    }
    Ok(latent_to_pixels(&state.z))
}

/// Samples `cond.shape()[0]` images in fixed-size chunks spread over
/// `workers`; the chunking does not depend on the worker count.
#[allow(clippy::too_many_arguments)]
pub fn sample_batch(
    denoiser: &dyn NoisePredictor,
    classifier: Option<&dyn GuidanceScore>,
    cond: &Tensor,
    latent: &[usize],
    guidance: &GuidanceConfig,
    schedule: &NoiseSchedule,
    chunk: usize,
    workers: &Workers,
) -> Result<Tensor> {
    let n = cond.shape()[0];
    let chunk = chunk.max(1);
    let chunks = n.div_ceil(chunk);
    let parts = workers.try_map_range(chunks, |ci| {
        let lo = ci * chunk;
        let hi = (lo + chunk).min(n);
        let rows: Vec<Tensor> = (lo..hi).map(|i| cond.index_outer(i)).collect();
        let c = Tensor::stack_outer(&rows)?;
        sample(denoiser, classifier, &c, latent, guidance, schedule, lo)
    })?;
    Ok(Tensor::stack_outer(&parts)?)
}
