use serde::{Deserialize, Serialize};
use unic_tensor::{Result, Tape, Tensor, Var};

use super::params::{Bound, Params};
use crate::diffusion::NoisePredictor;
use crate::rng::Rng;

/// Length of the condition vector `c`.
pub const COND_DIM: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenoiserConfig {
    pub image_size: usize,
    /// Widths of the three encoder blocks (full, half, quarter resolution).
    pub channels: [usize; 3],
    pub time_dim: usize,
    pub embed_dim: usize,
    /// Feed two constant coordinate ramps alongside the image, so that
    /// spatially pooled encoder features still carry position.
    pub coord_channels: bool,
    /// Add a projection of the spatially pooled deepest features to every
    /// decoder block, so the decoder sees the whole frame.
    #[serde(default)]
    pub global_context: bool,
    /// A quarter-resolution bottleneck (two more convolutions at 4×4)
    /// between the deepest encoder block and the decoder.
    #[serde(default)]
    pub bottleneck: bool,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            channels: [16, 32, 64],
            time_dim: 32,
            embed_dim: 64,
            coord_channels: true,
            global_context: true,
            bottleneck: true,
        }
    }
}

/// Sinusoidal embedding `[N, dim]` of integer timesteps.
pub fn timestep_embedding(t: &[usize], dim: usize) -> Tensor {
    let half = dim / 2;
    let mut data = vec![0.0; t.len() * dim];
    for (row, &ti) in data.chunks_exact_mut(dim).zip(t) {
        for i in 0..half {
            let freq = (-(10_000f64).ln() * i as f64 / half as f64).exp();
            let a = ti as f64 * freq;
            row[i] = a.sin();
            row[half + i] = a.cos();
        }
    }
    Tensor::new(vec![t.len(), dim], data).expect("finite embedding")
}

pub(crate) fn coord_planes(n: usize, size: usize) -> Tensor {
    let plane = size * size;
    Tensor::from_fn(&[n, 2, size, size], |i| {
        let within = i % (2 * plane);
        let (ch, p) = (within / plane, within % plane);
        let pos = if ch == 0 { p % size } else { p / size };
        2.0 * (pos as f64 + 0.5) / size as f64 - 1.0
    })
}

/// Encoder activations at each resolution plus the time/condition
/// embedding, which the decoder reuses.
pub struct Encoded {
    pub h1: Var,
    pub h2: Var,
    pub h3: Var,
    pub emb: Var,
}

/// Conditional U-Net-style noise predictor `eps_theta(z_t, c, t)`.
///
/// Parameters under `encoder.` (embeddings and the three strided conv
/// blocks) are what the classifier reuses; `decoder.` holds the transposed
/// convolution path back to full resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Denoiser {
    pub config: DenoiserConfig,
    pub params: Params,
}

impl Denoiser {
    pub fn init(config: DenoiserConfig, rng: &mut Rng) -> Self {
        let [c1, c2, c3] = config.channels;
        let (td, ed) = (config.time_dim, config.embed_dim);
        let mut p = Params::new();
        p.insert_init("encoder.time.w", &[ed, td], td, rng);
        p.insert("encoder.time.b", Tensor::zeros(&[ed]));
        p.insert_init("encoder.cond.w", &[ed, COND_DIM], COND_DIM, rng);
        p.insert("encoder.cond.b", Tensor::zeros(&[ed]));
        p.insert_init("encoder.block1.conv", &[c1, 1, 3, 3], 9, rng);
        if config.coord_channels {
            p.insert_init("encoder.block1.coord", &[c1, 2, 3, 3], 27, rng);
        }
        p.insert_init("encoder.block2.conv", &[c2, c1, 3, 3], c1 * 9, rng);
        p.insert_init("encoder.block3.conv", &[c3, c2, 3, 3], c2 * 9, rng);
        for (name, c) in [("encoder.block1", c1), ("encoder.block2", c2), ("encoder.block3", c3)] {
            p.insert_init(&format!("{name}.emb.w"), &[c, ed], ed, rng);
            p.insert(format!("{name}.emb.b"), Tensor::zeros(&[c]));
        }
        if config.bottleneck {
            p.insert_init("decoder.mid.down", &[c3, c3, 3, 3], c3 * 9, rng);
            p.insert_init("decoder.mid.conv", &[c3, c3, 3, 3], c3 * 9, rng);
            p.insert_init("decoder.mid.up", &[c3, c3, 2, 2], c3, rng);
            for name in ["decoder.mid.down", "decoder.mid.up"] {
                p.insert_init(&format!("{name}.emb.w"), &[c3, ed], ed, rng);
                p.insert(format!("{name}.emb.b"), Tensor::zeros(&[c3]));
            }
        }
        p.insert_init("decoder.up2.conv", &[c3, c2, 2, 2], c3, rng);
        p.insert_init("decoder.up1.conv", &[c2, c1, 2, 2], c2, rng);
        for (name, c) in [("decoder.up2", c2), ("decoder.up1", c1)] {
            p.insert_init(&format!("{name}.emb.w"), &[c, ed], ed, rng);
            p.insert(format!("{name}.emb.b"), Tensor::zeros(&[c]));
            if config.global_context {
                p.insert_init(&format!("{name}.ctx.w"), &[c, c3], c3, rng);
                p.insert(format!("{name}.ctx.b"), Tensor::zeros(&[c]));
            }
        }
        p.insert_init("decoder.out.conv", &[1, c1, 3, 3], c1 * 9, rng);
        p.insert("decoder.out.b", Tensor::zeros(&[1]));
        Self { config, params: p }
    }

    pub fn encoder_params(&self) -> Params {
        self.params.subset("encoder.")
    }

    fn block_bias(tape: &mut Tape, p: &Bound, name: &str, emb: Var) -> Result<Var> {
        let w = p.get(&format!("{name}.emb.w"));
        let b = p.get(&format!("{name}.emb.b"));
        tape.linear(emb, w, b)
    }

    /// Runs the encoder; `p` must hold every `encoder.` parameter.
    pub fn encode(
        config: &DenoiserConfig,
        tape: &mut Tape,
        p: &Bound,
        z: Var,
        t: &[usize],
        cond: Var,
    ) -> Result<Encoded> {
        let n = t.len();
        let temb = tape.constant(timestep_embedding(t, config.time_dim))?;
        let te = tape.linear(temb, p.get("encoder.time.w"), p.get("encoder.time.b"))?;
        let ce = tape.linear(cond, p.get("encoder.cond.w"), p.get("encoder.cond.b"))?;
        let e = tape.add(te, ce)?;
        let emb = tape.silu(e)?;

        let mut x = tape.conv2d(z, p.get("encoder.block1.conv"), 1, 1)?;
        if config.coord_channels {
            let coords = tape.constant(coord_planes(n, config.image_size))?;
            let xc = tape.conv2d(coords, p.get("encoder.block1.coord"), 1, 1)?;
            x = tape.add(x, xc)?;
        }
        let bias = Self::block_bias(tape, p, "encoder.block1", emb)?;
        let x = tape.add_channel(x, bias)?;
        let h1 = tape.silu(x)?;

        let x = tape.conv2d(h1, p.get("encoder.block2.conv"), 2, 1)?;
        let bias = Self::block_bias(tape, p, "encoder.block2", emb)?;
        let x = tape.add_channel(x, bias)?;
        let h2 = tape.silu(x)?;

        let x = tape.conv2d(h2, p.get("encoder.block3.conv"), 2, 1)?;
        let bias = Self::block_bias(tape, p, "encoder.block3", emb)?;
        let x = tape.add_channel(x, bias)?;
        let h3 = tape.silu(x)?;
        Ok(Encoded { h1, h2, h3, emb })
    }

    /// Full noise prediction for `z: [N,1,S,S]`, per-sample timesteps `t`,
    /// and `cond: [N, COND_DIM]`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &Bound,
        z: Var,
        t: &[usize],
        cond: Var,
    ) -> Result<Var> {
        let enc = Self::encode(&self.config, tape, p, z, t, cond)?;
        let emb = enc.emb;
        let context = if self.config.global_context {
            let s = tape.value(enc.h3).shape().to_vec();
            let g = tape.avg_pool2d(enc.h3, s[2])?;
            Some(tape.reshape(g, &[s[0], s[1]])?)
        } else {
            None
        };
        let decoder_bias = |tape: &mut Tape, name: &str| -> Result<Var> {
            let bias = Self::block_bias(tape, p, name, emb)?;
            match context {
                Some(g) => {
                    let w = p.get(&format!("{name}.ctx.w"));
                    let b = p.get(&format!("{name}.ctx.b"));
                    let c = tape.linear(g, w, b)?;
                    tape.add(bias, c)
                }
                None => Ok(bias),
            }
        };

        let deep = if self.config.bottleneck {
            let x = tape.conv2d(enc.h3, p.get("decoder.mid.down"), 2, 1)?;
            let bias = Self::block_bias(tape, p, "decoder.mid.down", emb)?;
            let x = tape.add_channel(x, bias)?;
            let m = tape.silu(x)?;
            let x = tape.conv2d(m, p.get("decoder.mid.conv"), 1, 1)?;
            let m = tape.silu(x)?;
            let x = tape.conv_transpose2d(m, p.get("decoder.mid.up"), 2, 0)?;
            let x = tape.add(x, enc.h3)?;
            let bias = Self::block_bias(tape, p, "decoder.mid.up", emb)?;
            let x = tape.add_channel(x, bias)?;
            tape.silu(x)?
        } else {
            enc.h3
        };
        let x = tape.conv_transpose2d(deep, p.get("decoder.up2.conv"), 2, 0)?;
        let x = tape.add(x, enc.h2)?;
        let bias = decoder_bias(tape, "decoder.up2")?;
        let x = tape.add_channel(x, bias)?;
        let u2 = tape.silu(x)?;

        let x = tape.conv_transpose2d(u2, p.get("decoder.up1.conv"), 2, 0)?;
        let x = tape.add(x, enc.h1)?;
        let bias = decoder_bias(tape, "decoder.up1")?;
        let x = tape.add_channel(x, bias)?;
        let u1 = tape.silu(x)?;

        let x = tape.conv2d(u1, p.get("decoder.out.conv"), 1, 1)?;
        tape.add_channel(x, p.get("decoder.out.b"))
    }

    /// Prediction without recording anything differentiable.
    pub fn predict(&self, z: &Tensor, t: &[usize], cond: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape, false)?;
        let zv = tape.constant(z.clone())?;
        let cv = tape.constant(cond.clone())?;
        let out = self.forward(&mut tape, &p, zv, t, cv)?;
        Ok(tape.value(out).clone())
    }
}

impl NoisePredictor for Denoiser {
    fn predict_noise(&self, z: &Tensor, t: usize, cond: &Tensor) -> Result<Tensor> {
        let ts = vec![t; z.shape()[0]];
        self.predict(z, &ts, cond)
    }
}
