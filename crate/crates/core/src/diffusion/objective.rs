use unic_tensor::{Tape, Tensor, Var};

use super::{NoiseSchedule, Result};
use crate::rng::Rng;

/// `sqrt(alpha_bar[t]) * z0 + sqrt(1 - alpha_bar[t]) * eps`.
pub fn forward_diffuse(
    z0: &Tensor,
    t: usize,
    eps: &Tensor,
    schedule: &NoiseSchedule,
) -> Result<Tensor> {
    let ab = schedule.alpha_bar(t)?;
    Ok(z0.scale(ab.sqrt()).axpy((1.0 - ab).sqrt(), eps)?)
}

/// One draw of per-sample timesteps and noise for a batch `[N, ...]`.
#[derive(Clone, Debug)]
pub struct NoisyBatch {
    pub t: Vec<usize>,
    pub eps: Tensor,
    pub z_t: Tensor,
}

impl NoisyBatch {
    pub fn draw(z0: &Tensor, schedule: &NoiseSchedule, rng: &mut Rng) -> Result<Self> {
        let n = z0.shape()[0];
        let t: Vec<usize> = (0..n).map(|_| rng.below(schedule.len())).collect();
        let eps = rng.normal_tensor(z0.shape());
        Self::with(z0, t, eps, schedule)
    }

    pub fn with(z0: &Tensor, t: Vec<usize>, eps: Tensor, schedule: &NoiseSchedule) -> Result<Self> {
        if eps.shape() != z0.shape() {
            return Err(unic_tensor::TensorError::ShapeMismatch {
                op: "noisy_batch",
                left: z0.shape().to_vec(),
                right: eps.shape().to_vec(),
            }
            .into());
        }
        let n = z0.shape()[0];
        assert_eq!(t.len(), n, "one timestep per sample");
        let per = z0.numel() / n;
        let mut z_t = z0.clone();
        for (i, &ti) in t.iter().enumerate() {
            let ab = schedule.alpha_bar(ti)?;
            let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
            let rows = i * per..(i + 1) * per;
            for (z, e) in z_t.data_mut()[rows.clone()].iter_mut().zip(&eps.data()[rows]) {
                *z = a * *z + b * e;
            }
        }
        Ok(Self { t, eps, z_t })
    }

    /// Rows `range` of this draw.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        let pick = |x: &Tensor| {
            Tensor::stack_outer(&range.clone().map(|i| x.index_outer(i)).collect::<Vec<_>>())
        };
        Ok(Self {
            t: self.t[range.clone()].to_vec(),
            eps: pick(&self.eps)?,
            z_t: pick(&self.z_t)?,
        })
    }

    /// MSE between the drawn noise and `predict(z_t, t, cond)` on `tape`.
    pub fn loss<F>(&self, tape: &mut Tape, cond: &Tensor, predict: F) -> Result<Var>
    where
        F: FnOnce(&mut Tape, Var, &[usize], Var) -> unic_tensor::Result<Var>,
    {
        let z = tape.constant(self.z_t.clone())?;
        let c = tape.constant(cond.clone())?;
        let eps = tape.constant(self.eps.clone())?;
        let pred = predict(tape, z, &self.t, c)?;
        Ok(tape.mse(pred, eps)?)
    }
}

/// Noise-prediction loss for a batch: draws `t` uniformly and `eps ~ N(0, I)`
/// per sample from `rng`, then scores `predict`.
pub fn denoising_loss<F>(
    tape: &mut Tape,
    z0: &Tensor,
    cond: &Tensor,
    schedule: &NoiseSchedule,
    rng: &mut Rng,
    predict: F,
) -> Result<Var>
where
    F: FnOnce(&mut Tape, Var, &[usize], Var) -> unic_tensor::Result<Var>,
{
    NoisyBatch::draw(z0, schedule, rng)?.loss(tape, cond, predict)
}
