use unic_tensor::{grad_wrt_input, Result, Tape, Tensor, Var};

use super::denoiser::{Denoiser, DenoiserConfig, COND_DIM};
use super::params::{Bound, Params};
use crate::diffusion::GuidanceScore;

/// Binary classifier over the frozen denoiser encoder: the deepest encoder
/// feature map is average-pooled over space and mapped to one logit.
///
/// The encoder is evaluated with a zero condition vector, so the score
/// depends only on the image and the timestep. Pooled features are
/// standardized by the fixed `head.shift` and `head.gain` (set once from
/// training features, never trained), which folds into the linear layer.
#[derive(Clone, Debug, PartialEq)]
pub struct UniClassifier {
    pub config: DenoiserConfig,
    pub encoder: Params,
    pub head: Params,
}

impl UniClassifier {
    /// Name of the encoder stage feeding the pooling layer.
    pub const FEATURE_STAGE: &'static str = "encoder.block3";

    /// Copies the encoder of `denoiser` and attaches a zero head.
    pub fn new(denoiser: &Denoiser) -> Self {
        let width = denoiser.config.channels[2];
        let mut head = Params::new();
        head.insert("head.w", Tensor::zeros(&[1, width]));
        head.insert("head.b", Tensor::zeros(&[1]));
        head.insert("head.shift", Tensor::zeros(&[1, width]));
        head.insert("head.gain", Tensor::full(&[1, width], 1.0));
        Self {
            config: denoiser.config.clone(),
            encoder: denoiser.encoder_params(),
            head,
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.config.channels[2]
    }

    /// Pooled deepest-stage features `[N, C]` on `tape`.
    pub fn pooled(&self, tape: &mut Tape, enc: &Bound, z: Var, t: &[usize]) -> Result<Var> {
        let cond = tape.constant(Tensor::zeros(&[t.len(), COND_DIM]))?;
        let h = Denoiser::encode(&self.config, tape, enc, z, t, cond)?.h3;
        let s = tape.value(h).shape().to_vec();
        assert_eq!(s[2], s[3], "square feature map");
        let pooled = tape.avg_pool2d(h, s[2])?;
        tape.reshape(pooled, &[s[0], s[1]])
    }

    /// Pooled features as a plain tensor, nothing differentiated.
    pub fn features(&self, z: &Tensor, t: &[usize]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let enc = self.encoder.bind(&mut tape, false)?;
        let zv = tape.constant(z.clone())?;
        let f = self.pooled(&mut tape, &enc, zv, t)?;
        Ok(tape.value(f).clone())
    }

    pub fn head_logits(&self, tape: &mut Tape, head: &Bound, features: Var) -> Result<Var> {
        let w = tape.mul(head.get("head.w"), head.get("head.gain"))?;
        let ws = tape.mul(w, head.get("head.shift"))?;
        let offset = tape.sum(ws)?;
        let offset = tape.reshape(offset, &[1])?;
        let b = tape.sub(head.get("head.b"), offset)?;
        tape.linear(features, w, b)
    }

    /// Logit per sample.
    pub fn logits(&self, z: &Tensor, t: &[usize]) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let enc = self.encoder.bind(&mut tape, false)?;
        let head = self.head.bind(&mut tape, false)?;
        let zv = tape.constant(z.clone())?;
        let f = self.pooled(&mut tape, &enc, zv, t)?;
        let l = self.head_logits(&mut tape, &head, f)?;
        Ok(tape.value(l).data().to_vec())
    }

    /// `sum_i log p(y = 1 | z_i)` on `tape` with every parameter constant.
    fn log_prob_on(&self, tape: &mut Tape, z: Var, t: &[usize]) -> Result<Var> {
        let enc = self.encoder.bind(tape, false)?;
        let head = self.head.bind(tape, false)?;
        let f = self.pooled(tape, &enc, z, t)?;
        let l = self.head_logits(tape, &head, f)?;
        let lp = tape.log_sigmoid(l)?;
        tape.sum(lp)
    }

    /// `log p(y = 1 | z_t)` for a single latent `[1, 1, S, S]`.
    pub fn log_prob(&self, z: &Tensor, t: usize) -> Result<f64> {
        let mut tape = Tape::new();
        let zv = tape.constant(z.clone())?;
        let out = self.log_prob_on(&mut tape, zv, &vec![t; z.shape()[0]])?;
        tape.value(out).item()
    }

    /// Gradient of `sum_i log p(y = 1 | z_i)` with respect to the batch;
    /// samples do not interact, so row `i` is sample `i`'s own gradient.
    pub fn input_grad(&self, z: &Tensor, t: usize) -> Result<Tensor> {
        let ts = vec![t; z.shape()[0]];
        grad_wrt_input(z, |tape, zv| self.log_prob_on(tape, zv, &ts))
    }
}

impl GuidanceScore for UniClassifier {
    fn grad_log_prob(&self, z: &Tensor, t: usize) -> Result<Tensor> {
        self.input_grad(z, t)
    }
}
